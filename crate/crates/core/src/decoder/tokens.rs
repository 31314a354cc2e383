//! Token groups and their layout in the query matrix.

use std::ops::Range;

use nalgebra::{DMatrix, RowDVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::prompts::{encode_prompt, PromptSet, PromptWeights};
use super::DecoderConfig;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Group {
    Params,
    Box,
    Kp2d,
    Kp3d,
    Prompt,
}

impl Group {
    pub const ALL: [Group; 5] = [
        Group::Params,
        Group::Box,
        Group::Kp2d,
        Group::Kp3d,
        Group::Prompt,
    ];
}

/// Tokens per instance in each group. `params` covers body model and camera.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenLayout {
    pub params: usize,
    pub bbox: usize,
    pub kp2d: usize,
    pub kp3d: usize,
    pub prompt: usize,
}

impl TokenLayout {
    /// 4 + 1 + 3 + 3 + 2 = 13 tokens.
    pub fn desk() -> Self {
        Self {
            params: 4,
            bbox: 1,
            kp2d: 3,
            kp3d: 3,
            prompt: 2,
        }
    }

    /// 325 + 1 + 26 + 26 + 27 = 405 tokens.
    pub fn full() -> Self {
        Self {
            params: 325,
            bbox: 1,
            kp2d: 26,
            kp3d: 26,
            prompt: 27,
        }
    }

    pub fn count(&self, g: Group) -> usize {
        match g {
            Group::Params => self.params,
            Group::Box => self.bbox,
            Group::Kp2d => self.kp2d,
            Group::Kp3d => self.kp3d,
            Group::Prompt => self.prompt,
        }
    }

    pub fn per_instance(&self) -> usize {
        Group::ALL.iter().map(|g| self.count(*g)).sum()
    }
}

/// Decoder queries `Q^l` (N × D) and the previous layer's state.
///
/// Rows are group-major: all params tokens of every slot, then all box
/// tokens, and so on. Within a group, slot `s` owns a contiguous block.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenState {
    pub tokens: DMatrix<f64>,
    pub previous: DMatrix<f64>,
    pub layer: usize,
    slots: usize,
    layout: TokenLayout,
}

impl TokenState {
    pub fn new(tokens: DMatrix<f64>, slots: usize, layout: TokenLayout) -> Self {
        let previous = DMatrix::zeros(tokens.nrows(), tokens.ncols());
        Self {
            tokens,
            previous,
            layer: 0,
            slots,
            layout,
        }
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn layout(&self) -> TokenLayout {
        self.layout
    }

    pub fn n_tokens(&self) -> usize {
        self.tokens.nrows()
    }

    pub fn width(&self) -> usize {
        self.tokens.ncols()
    }

    pub fn group_range(&self, g: Group) -> Range<usize> {
        let mut start = 0;
        for h in Group::ALL {
            let len = self.slots * self.layout.count(h);
            if h == g {
                return start..start + len;
            }
            start += len;
        }
        unreachable!()
    }

    /// Row of token `t` of slot `slot` in group `g`.
    pub fn index(&self, g: Group, slot: usize, t: usize) -> usize {
        self.group_range(g).start + slot * self.layout.count(g) + t
    }

    /// All rows owned by one slot, in group order.
    pub fn slot_rows(&self, slot: usize) -> Vec<usize> {
        Group::ALL
            .iter()
            .flat_map(|&g| (0..self.layout.count(g)).map(move |t| (g, t)))
            .map(|(g, t)| self.index(g, slot, t))
            .collect()
    }

    pub fn group(&self, g: Group) -> DMatrix<f64> {
        let r = self.group_range(g);
        self.tokens.rows(r.start, r.len()).into_owned()
    }

    pub fn row(&self, i: usize) -> RowDVector<f64> {
        self.tokens.row(i).into_owned()
    }
}

/// Build `Q^0`: prompt tokens encode `prompts`, every other group is drawn
/// uniformly from `[-1, 1)` in row order.
pub fn assemble_queries<R: Rng + ?Sized>(
    config: &DecoderConfig,
    prompts: &PromptSet,
    weights: &PromptWeights,
    rng: &mut R,
) -> Result<TokenState> {
    config.validate()?;
    prompts.validate(config)?;
    let d = config.width;
    let mut state = TokenState::new(
        DMatrix::zeros(config.n_tokens(), d),
        config.slots,
        config.layout,
    );
    for g in Group::ALL {
        if g == Group::Prompt {
            continue;
        }
        for r in state.group_range(g) {
            for c in 0..d {
                state.tokens[(r, c)] = rng.gen_range(-1.0..1.0);
            }
        }
    }
    for slot in 0..config.slots {
        let encoded = encode_prompt(config, prompts.instances.get(slot), weights);
        for (t, row) in encoded.iter().enumerate() {
            let i = state.index(Group::Prompt, slot, t);
            state.tokens.set_row(i, row);
        }
    }
    Ok(state)
}
