pub mod config;
pub mod expr;

pub use config::{parse_model_config, ModelConfig};
pub use expr::{diff_expr, eval_expr, parse_expr, ExprAst};
