use std::fmt;

/// A command failure tagged with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    kind: Kind,
    error: anyhow::Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Runtime,
    Input,
    Config,
}

impl Failure {
    pub fn runtime(error: impl Into<anyhow::Error>) -> Self {
        Failure { kind: Kind::Runtime, error: error.into() }
    }

    /// Missing, unreadable or malformed input files.
    pub fn input(error: impl Into<anyhow::Error>) -> Self {
        Failure { kind: Kind::Input, error: error.into() }
    }

    pub fn config(error: impl Into<anyhow::Error>) -> Self {
        Failure { kind: Kind::Config, error: error.into() }
    }

    pub fn exit_code(&self) -> u8 {
        match self.kind {
            Kind::Runtime => 1,
            Kind::Input => 2,
            Kind::Config => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if f.alternate() {
            write!(f, "{:#}", self.error)
        } else {
            write!(f, "{}", self.error)
        }
    }
}

/// Attaches an exit-code class and a context message to a fallible call.
pub trait Classify<T> {
    fn input_ctx(self, what: impl FnOnce() -> String) -> Result<T, Failure>;
    fn config_ctx(self, what: impl FnOnce() -> String) -> Result<T, Failure>;
    fn runtime_ctx(self, what: impl FnOnce() -> String) -> Result<T, Failure>;
}

impl<T, E> Classify<T> for Result<T, E>
where
    E: Into<anyhow::Error>,
{
    fn input_ctx(self, what: impl FnOnce() -> String) -> Result<T, Failure> {
        self.map_err(|e| Failure::input(e.into().context(what())))
    }

    fn config_ctx(self, what: impl FnOnce() -> String) -> Result<T, Failure> {
        self.map_err(|e| Failure::config(e.into().context(what())))
    }

    fn runtime_ctx(self, what: impl FnOnce() -> String) -> Result<T, Failure> {
        self.map_err(|e| Failure::runtime(e.into().context(what())))
    }
}
