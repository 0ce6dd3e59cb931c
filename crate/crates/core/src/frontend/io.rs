//! Structure JSON (`"format": "modex/1"`).
//!
//! ```json
//! {"format": "modex/1", "domain": ["a", "b"], "vocab": {"Edge": 2}, "atoms": {"Edge(a,b)": "t"}}
//! ```
//!
//! Unlisted atoms are `u`. The writer lists only non-`u` atoms, in atom order.

use std::sync::Arc;

use serde_json::{Map, Value};
use thiserror::Error;

use crate::lattice::{Domain, PartialStructure, Signature, TruthValue, Vocabulary};

pub const FORMAT: &str = "modex/1";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IoError {
    #[error("invalid JSON at line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    /// `pointer` is a JSON pointer into the document.
    #[error("schema error at `{pointer}`: {msg}")]
    Schema { pointer: String, msg: String },
}

fn schema<T>(pointer: impl Into<String>, msg: impl Into<String>) -> Result<T, IoError> {
    Err(IoError::Schema { pointer: pointer.into(), msg: msg.into() })
}

fn escape(token: &str) -> String {
    token.replace('~', "~0").replace('/', "~1")
}

fn read_domain(v: &Value) -> Result<Vec<String>, IoError> {
    let Value::Array(items) = v else {
        return schema("/domain", "expected an array of element names");
    };
    items
        .iter()
        .enumerate()
        .map(|(i, x)| match x {
            Value::String(s) => Ok(s.clone()),
            Value::Number(n) => Ok(n.to_string()),
            _ => schema(format!("/domain/{i}"), "expected a string"),
        })
        .collect()
}

fn read_vocab(v: &Value) -> Result<Vec<(String, usize)>, IoError> {
    let Value::Object(m) = v else {
        return schema("/vocab", "expected an object mapping predicate names to arities");
    };
    m.iter()
        .map(|(k, x)| match x.as_u64() {
            Some(n) => Ok((k.clone(), n as usize)),
            None => schema(format!("/vocab/{}", escape(k)), "expected a non-negative integer arity"),
        })
        .collect()
}

/// Parses a structure. With `expected`, the document must use that signature (its `domain` and `vocab` may be
/// omitted); without it, both are required.
pub fn read_structure(text: &str, expected: Option<&Arc<Signature>>) -> Result<PartialStructure, IoError> {
    let doc: Value =
        serde_json::from_str(text).map_err(|e| IoError::Syntax { line: e.line(), col: e.column(), msg: e.to_string() })?;
    let Value::Object(top) = &doc else {
        return schema("", "expected an object");
    };
    for k in top.keys() {
        if !matches!(k.as_str(), "format" | "domain" | "vocab" | "atoms") {
            return schema(format!("/{}", escape(k)), "unknown key");
        }
    }
    match top.get("format") {
        None => {}
        Some(Value::String(s)) if s == FORMAT => {}
        Some(_) => return schema("/format", format!("expected \"{FORMAT}\"")),
    }
    let domain = top.get("domain").map(read_domain).transpose()?;
    let vocab = top.get("vocab").map(read_vocab).transpose()?;
    let sig = match expected {
        Some(sig) => {
            if let Some(d) = &domain {
                if d.as_slice() != sig.domain().names() {
                    return schema("/domain", "does not match the problem's domain");
                }
            }
            if let Some(v) = &vocab {
                let want: Vec<(String, usize)> = sig.vocab().preds().iter().map(|p| (p.name.clone(), p.arity)).collect();
                if *v != want {
                    return schema("/vocab", "does not match the problem's vocabulary");
                }
            }
            sig.clone()
        }
        None => {
            let Some(d) = domain else {
                return schema("/domain", "missing");
            };
            let d = Domain::new(d).or_else(|e| schema("/domain", e.to_string()))?;
            let v = Vocabulary::new(vocab.unwrap_or_default()).or_else(|e| schema("/vocab", e.to_string()))?;
            Signature::new(d, v)
        }
    };
    let mut b = PartialStructure::unknown(&sig);
    let mut seen = vec![false; sig.num_atoms()];
    match top.get("atoms") {
        None => {}
        Some(Value::Object(atoms)) => {
            for (k, v) in atoms {
                let ptr = format!("/atoms/{}", escape(k));
                let atom = sig.parse_atom_name(k).or_else(|e| schema(&ptr, e.to_string()))?;
                if std::mem::replace(&mut seen[atom], true) {
                    return schema(&ptr, "atom listed twice");
                }
                let tv = v
                    .as_str()
                    .filter(|s| s.len() == 1)
                    .and_then(|s| s.chars().next())
                    .and_then(TruthValue::from_char)
                    .map_or_else(|| schema(&ptr, "expected one of \"t\", \"f\", \"u\", \"i\""), Ok)?;
                b.set(atom, tv);
            }
        }
        Some(_) => return schema("/atoms", "expected an object"),
    }
    Ok(b)
}

fn structure_value(b: &PartialStructure) -> Value {
    let sig = b.sig();
    let mut top = Map::new();
    top.insert("format".into(), FORMAT.into());
    top.insert("domain".into(), sig.domain().names().iter().map(|s| Value::from(s.as_str())).collect());
    let vocab: Map<String, Value> = sig.vocab().preds().iter().map(|p| (p.name.clone(), Value::from(p.arity))).collect();
    top.insert("vocab".into(), Value::Object(vocab));
    let atoms: Map<String, Value> = (0..b.len())
        .filter(|&a| b.get(a) != TruthValue::U)
        .map(|a| (sig.atom_name(a), Value::from(b.get(a).as_char().to_string())))
        .collect();
    top.insert("atoms".into(), Value::Object(atoms));
    Value::Object(top)
}

/// Canonical pretty-printed document with a trailing newline.
pub fn write_structure(b: &PartialStructure) -> String {
    let mut s = serde_json::to_string_pretty(&structure_value(b)).expect("structure JSON is serializable");
    s.push('\n');
    s
}

/// A list of models: `{"format": ..., "domain": ..., "vocab": ..., "models": [{atoms}, ...]}`.
pub fn write_models(sig: &Arc<Signature>, models: &[PartialStructure]) -> String {
    let mut top = match structure_value(&PartialStructure::unknown(sig)) {
        Value::Object(m) => m,
        _ => unreachable!(),
    };
    top.remove("atoms");
    let ms: Vec<Value> = models
        .iter()
        .map(|m| match structure_value(m) {
            Value::Object(mut o) => o.remove("atoms").unwrap_or_default(),
            _ => unreachable!(),
        })
        .collect();
    top.insert("models".into(), Value::Array(ms));
    let mut s = serde_json::to_string_pretty(&Value::Object(top)).expect("model JSON is serializable");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sig() -> Arc<Signature> {
        Signature::build(&["a", "b"], &[("p", 0), ("E", 2)]).unwrap()
    }

    #[test]
    fn missing_atoms_key_is_all_unknown() {
        let b = read_structure(r#"{"format":"modex/1","domain":["a","b"],"vocab":{"p":0,"E":2}}"#, None).unwrap();
        assert!(b.vals().iter().all(|&v| v == TruthValue::U));
        assert_eq!(b.len(), 5);
    }

    #[test]
    fn schema_errors_point_at_the_offending_value() {
        let s = sig();
        let cases = [
            (r#"{"atoms":{"E(a,b)":"x"}}"#, "/atoms/E(a,b)"),
            (r#"{"atoms":{"E(a)":"t"}}"#, "/atoms/E(a)"),
            (r#"{"atoms":{"E(a,b)":"t","E(a, b)":"f"}}"#, "/atoms/E(a, b)"),
            (r#"{"atoms":[]}"#, "/atoms"),
            (r#"{"format":"modex/2"}"#, "/format"),
            (r#"{"domain":["a"]}"#, "/domain"),
            (r#"{"vocab":{"p":0,"E":-1}}"#, "/vocab/E"),
            (r#"{"extra/key":1}"#, "/extra~1key"),
            ("[]", ""),
        ];
        for (doc, ptr) in cases {
            match read_structure(doc, Some(&s)) {
                Err(IoError::Schema { pointer, .. }) => assert_eq!(pointer, ptr, "{doc}"),
                other => panic!("{doc}: {other:?}"),
            }
        }
        assert!(matches!(read_structure("{", Some(&s)), Err(IoError::Syntax { .. })));
    }

    #[test]
    fn bounds_state_round_trips_byte_identically() {
        let names: Vec<String> = (1..=100).map(|n| n.to_string()).collect();
        let names: Vec<&str> = names.iter().map(String::as_str).collect();
        let sig = Signature::build(&names, &[("Qc", 1), ("Qd", 1)]).unwrap();
        let mut b = PartialStructure::unknown(&sig);
        for n in 1..=100usize {
            if n < 10 {
                b.set(sig.atom(0, &[n - 1]), TruthValue::F);
            }
            if n >= 90 {
                b.set(sig.atom(0, &[n - 1]), TruthValue::T);
            }
            if n < 20 {
                b.set(sig.atom(1, &[n - 1]), TruthValue::F);
            }
            if n >= 80 {
                b.set(sig.atom(1, &[n - 1]), TruthValue::T);
            }
        }
        let text = write_structure(&b);
        let back = read_structure(&text, None).unwrap();
        assert_eq!(back, b);
        assert_eq!(write_structure(&back), text);
        assert!(text.starts_with("{\n  \"format\": \"modex/1\""));
    }

    proptest! {
        #[test]
        fn any_structure_round_trips(vals in proptest::collection::vec(0u8..4, 5)) {
            let s = sig();
            let b = PartialStructure::from_vals(&s, vals.into_iter().map(TruthValue::from_bits).collect());
            let text = write_structure(&b);
            let back = read_structure(&text, Some(&s)).unwrap();
            prop_assert_eq!(&back, &b);
            prop_assert_eq!(write_structure(&back), text);
        }
    }
}
