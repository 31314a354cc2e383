//! Command-line pipeline around `zoo3d`: scene synthesis, decoding, matching,
//! evaluation and self-checks.
//!
//! Every command resolves a [`config::RunConfig`] from built-in defaults, an
//! optional JSON file and flags, and echoes it in its report.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod corpus;
pub mod decode;
pub mod eval;
pub mod matching;
pub mod selfcheck;
pub mod synth;

/// Process exit status for a command outcome.
pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_IO: i32 = 2;

/// I/O failures anywhere in the cause chain map to [`EXIT_IO`]; everything
/// else is a validation failure.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    let io = err.chain().any(|cause| {
        cause.is::<std::io::Error>()
            || matches!(cause.downcast_ref::<zoo3d::Error>(), Some(zoo3d::Error::Io(_)))
            || matches!(cause.downcast_ref::<zoo3d::Error>(), Some(zoo3d::Error::Json(e)) if e.is_io())
            || cause.downcast_ref::<serde_json::Error>().is_some_and(|e| e.is_io())
    });
    if io {
        EXIT_IO
    } else {
        EXIT_VALIDATION
    }
}
