use std::fmt;

use super::Func;

/// Coordinate names for a 2n-dimensional phase space.
///
/// Index `i < n` is the position `q^{i+1}`, index `n + i` the conjugate
/// momentum `p^{i+1}`. The name `t` is reserved for time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoordinateChart {
    n: usize,
    names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChartError {
    #[error("degrees of freedom must be positive")]
    ZeroDimension,
    #[error("expected {expected} coordinate names, got {got}")]
    WrongCount { expected: usize, got: usize },
    #[error("invalid coordinate name {0:?}")]
    InvalidName(String),
    #[error("coordinate name {0:?} is reserved")]
    Reserved(String),
    #[error("duplicate coordinate name {0:?}")]
    Duplicate(String),
}

impl CoordinateChart {
    /// Default chart `q1..qn, p1..pn`.
    pub fn canonical(n: usize) -> Result<Self, ChartError> {
        if n == 0 {
            return Err(ChartError::ZeroDimension);
        }
        let names = (1..=n)
            .map(|i| format!("q{i}"))
            .chain((1..=n).map(|i| format!("p{i}")))
            .collect();
        Ok(Self { n, names })
    }

    pub fn with_names<S: AsRef<str>>(n: usize, names: &[S]) -> Result<Self, ChartError> {
        if n == 0 {
            return Err(ChartError::ZeroDimension);
        }
        if names.len() != 2 * n {
            return Err(ChartError::WrongCount {
                expected: 2 * n,
                got: names.len(),
            });
        }
        let mut out: Vec<String> = Vec::with_capacity(names.len());
        for name in names {
            let name = name.as_ref();
            if !is_identifier(name) {
                return Err(ChartError::InvalidName(name.to_string()));
            }
            if name == "t" || Func::from_name(name).is_some() {
                return Err(ChartError::Reserved(name.to_string()));
            }
            if out.iter().any(|existing| existing == name) {
                return Err(ChartError::Duplicate(name.to_string()));
            }
            out.push(name.to_string());
        }
        Ok(Self { n, names: out })
    }

    /// Degrees of freedom.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Phase-space dimension 2n.
    pub fn dim(&self) -> usize {
        2 * self.n
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Index of `q^{i+1}`.
    pub fn q(&self, i: usize) -> usize {
        i
    }

    /// Index of `p^{i+1}`.
    pub fn p(&self, i: usize) -> usize {
        self.n + i
    }
}

impl fmt::Display for CoordinateChart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.names.join(", "))
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}
