//! Interned symbolic names.

use std::fmt;
use std::sync::Arc;

/// Prefix marking the pseudo-lock a thread holds from birth.
pub const LOCK_PREFIX: &str = "lock$";

/// A symbolic name: object, thread, pseudo-lock or function-local binder.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Name(Arc<str>);

impl Name {
    pub fn new(s: impl AsRef<str>) -> Self {
        Name(Arc::from(s.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// The pseudo-lock `lock$t` of thread `t`.
    pub fn lock_of(thread: &Name) -> Name {
        Name::new(format!("{LOCK_PREFIX}{}", thread.as_str()))
    }

    /// If this is a pseudo-lock, the thread that owns it.
    pub fn lock_owner(&self) -> Option<Name> {
        self.0.strip_prefix(LOCK_PREFIX).map(Name::new)
    }

    /// Rename through `f`, looking inside pseudo-locks: `lock$x` maps to
    /// `lock$f(x)` whenever `f` renames `x`.
    pub fn rename_with(&self, f: &dyn Fn(&Name) -> Option<Name>) -> Name {
        if let Some(n) = f(self) {
            return n;
        }
        match self.lock_owner() {
            Some(owner) => match owner.rename_with(f) {
                o if o != owner => Name::lock_of(&o),
                _ => self.clone(),
            },
            None => self.clone(),
        }
    }
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<&str> for Name {
    fn from(s: &str) -> Self {
        Name::new(s)
    }
}

impl From<String> for Name {
    fn from(s: String) -> Self {
        Name::new(s)
    }
}

impl serde::Serialize for Name {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}
