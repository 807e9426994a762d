use std::fmt;
use std::process::ExitCode;

use aspbench_core::dataset::DatasetError;
use aspbench_core::model_eval::EvalError;
use aspbench_core::mutation::{MutationError, ValidationError};
use aspbench_core::solver::SolverError;
use aspbench_harness::{PipelineError, PrepareError};

/// Failure classes with fixed exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Class {
    Failure = 1,
    Usage = 2,
    Dataset = 3,
    Solver = 4,
    Endpoint = 5,
}

#[derive(Debug)]
pub struct CliError {
    pub class: Class,
    pub message: String,
}

impl CliError {
    pub fn new(class: Class, message: impl fmt::Display) -> Self {
        CliError {
            class,
            message: message.to_string(),
        }
    }

    pub fn usage(message: impl fmt::Display) -> Self {
        Self::new(Class::Usage, message)
    }

    pub fn code(&self) -> ExitCode {
        ExitCode::from(self.class as u8)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        let class = match &e {
            DatasetError::Solver(_) => Class::Solver,
            _ => Class::Dataset,
        };
        CliError::new(class, e)
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        CliError::new(Class::Solver, e)
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        let class = match &e {
            EvalError::Gold { .. } => Class::Dataset,
            _ => Class::Solver,
        };
        CliError::new(class, e)
    }
}

impl From<MutationError> for CliError {
    fn from(e: MutationError) -> Self {
        let class = match &e {
            MutationError::Solver(_) => Class::Solver,
            _ => Class::Dataset,
        };
        CliError::new(class, e)
    }
}

impl From<ValidationError> for CliError {
    fn from(e: ValidationError) -> Self {
        match e {
            ValidationError::GoldFailsSuite { .. } => CliError::new(Class::Dataset, e),
            ValidationError::Solver(e) => e.into(),
            ValidationError::Eval(e) => e.into(),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let class = match &e {
            PipelineError::Config(_) => Class::Usage,
            PipelineError::Dataset(DatasetError::Solver(_)) => Class::Solver,
            PipelineError::Dataset(_) => Class::Dataset,
            PipelineError::Prepare(PrepareError::Gold { source, .. }) => match source {
                EvalError::Gold { .. } => Class::Dataset,
                _ => Class::Solver,
            },
            PipelineError::Prepare(_) => Class::Endpoint,
            PipelineError::Report(_) | PipelineError::Io { .. } | PipelineError::Pool(_) => Class::Failure,
        };
        CliError::new(class, e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new(Class::Failure, e)
    }
}
