#![allow(dead_code)]

pub mod gen;
pub mod unfold;

use std::path::PathBuf;

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

use std::collections::BTreeMap;

use lamlock_core::lam::{bind_formal, FunDef, SType};

/// Equality of two definitions up to a positional renaming of formals.
pub fn alpha_eq(ours: &FunDef, golden: &FunDef) -> bool {
    if ours.params.len() != golden.params.len() {
        return false;
    }
    let mut map = BTreeMap::new();
    for (g, o) in golden.params.iter().zip(&ours.params) {
        bind_formal(g, o, &mut map);
    }
    if let (Some(g), Some(o)) = (&golden.ret, &ours.ret) {
        bind_formal(g, o, &mut map);
    }
    let params: Vec<SType> = golden.params.iter().map(|p| p.rename_with(&|n| map.get(n).cloned())).collect();
    let ret = golden.ret.as_ref().map(|r| r.rename_with(&|n| map.get(n).cloned()));
    params == ours.params && ret == ours.ret && golden.body.rename(&map).normalize() == ours.body.normalize()
}
