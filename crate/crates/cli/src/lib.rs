//! Command layer behind the `posh` binary. Each module holds the logic for
//! one subcommand family so integration tests can drive it without spawning
//! processes.

pub mod bench_cmd;
pub mod corpus_cmd;
pub mod dyck_cmd;
pub mod eval_cmd;
pub mod ioutil;
pub mod recipe;
pub mod tok_cmd;
pub mod train_cmd;
