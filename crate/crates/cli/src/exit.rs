use flowopt::Error;

pub const USAGE: u8 = 1;
pub const INPUT: u8 = 2;
pub const NUMERICAL: u8 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn usage(error: anyhow::Error) -> Self {
        Failure { code: USAGE, error }
    }

    pub fn input(error: anyhow::Error) -> Self {
        Failure { code: INPUT, error }
    }

    pub fn numerical(error: anyhow::Error) -> Self {
        Failure {
            code: NUMERICAL,
            error,
        }
    }
}

fn code_for(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig(_) => USAGE,
        Error::InfeasibleFlow { .. } | Error::NegativeFlow { .. } | Error::UndefinedDelay => {
            NUMERICAL
        }
        _ => INPUT,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: code_for(&e),
            error: e.into(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = error
            .chain()
            .find_map(|c| c.downcast_ref::<Error>())
            .map_or(INPUT, code_for);
        Failure { code, error }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::input(e.into())
    }
}
