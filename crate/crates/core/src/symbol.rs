//! Index symbols and their roles.

use alloc::string::String;

/// Role of an index symbol inside a function specification.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SymbolKind {
    /// Enumerates the elements of the function output.
    Output,
    /// Bound by a summation in the function body.
    Summation,
    /// Enumerates the elements of an argument in a derivative expression.
    Derivative,
    /// Kernel coefficient introduced for a derivative summation.
    Kernel,
}

/// A named index variable. Names are unique within one specification scope;
/// two symbols compare equal only if both name and kind agree.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IndexSymbol {
    pub name: String,
    pub kind: SymbolKind,
}

impl IndexSymbol {
    pub fn new(name: impl Into<String>, kind: SymbolKind) -> Self {
        IndexSymbol { name: name.into(), kind }
    }

    pub fn output(name: impl Into<String>) -> Self {
        Self::new(name, SymbolKind::Output)
    }

    pub fn summation(name: impl Into<String>) -> Self {
        Self::new(name, SymbolKind::Summation)
    }

    pub fn derivative(name: impl Into<String>) -> Self {
        Self::new(name, SymbolKind::Derivative)
    }

    pub fn kernel(name: impl Into<String>) -> Self {
        Self::new(name, SymbolKind::Kernel)
    }
}

impl core::fmt::Display for IndexSymbol {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(&self.name)
    }
}
