//! Values, invocation descriptions and identifiers shared by every module.
//!
//! All payloads carried by transcripts, all sequential-type states and all
//! register contents are [`Value`]s. Values are totally ordered and hashable,
//! so states can be compared exactly and used as memoization keys.

use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

/// Process identifier, 1-based (`1..=n`).
pub type Pid = usize;
/// Operation identifier, unique within one transcript.
pub type OpId = u64;
/// Object identifier. Object `0` is the implemented (top-level) object.
pub type ObjId = u32;

/// A value stored in shared memory, returned by an operation, or used as a
/// sequential-type state.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    /// The distinguished initial value `⊥` (also used for `null` references).
    Bot,
    /// Acknowledgement returned by writer operations.
    Unit,
    Bool(bool),
    Int(i64),
    /// A fixed-arity tuple, printed as `(a,b,...)`.
    Tuple(Vec<Value>),
    /// A vector indexed by process, printed as `[a,b,...]`.
    Vector(Vec<Value>),
}

impl Value {
    pub fn int(v: i64) -> Value {
        Value::Int(v)
    }

    pub fn pair(a: Value, b: Value) -> Value {
        Value::Tuple(vec![a, b])
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_tuple(&self) -> Option<&[Value]> {
        match self {
            Value::Tuple(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_vector(&self) -> Option<&[Value]> {
        match self {
            Value::Vector(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_bot(&self) -> bool {
        matches!(self, Value::Bot)
    }

    /// A vector of `n` copies of `v`.
    pub fn filled(n: usize, v: Value) -> Value {
        Value::Vector(vec![v; n])
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bot => write!(f, "⊥"),
            Value::Unit => write!(f, "ok"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(v) => write!(f, "{v}"),
            Value::Tuple(items) => write_seq(f, "(", ")", items),
            Value::Vector(items) => write_seq(f, "[", "]", items),
        }
    }
}

fn write_seq(f: &mut fmt::Formatter<'_>, open: &str, close: &str, items: &[Value]) -> fmt::Result {
    write!(f, "{open}")?;
    for (i, v) in items.iter().enumerate() {
        if i > 0 {
            write!(f, ",")?;
        }
        write!(f, "{v}")?;
    }
    write!(f, "{close}")
}

/// Error produced when parsing values or invocations from text.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("parse error at byte {pos} in `{input}`: {msg}")]
pub struct ParseError {
    pub input: String,
    pub pos: usize,
    pub msg: String,
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser { src, pos: 0 }
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError { input: self.src.to_string(), pos: self.pos, msg: msg.into() }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn eat(&mut self, s: &str) -> bool {
        self.skip_ws();
        if self.rest().starts_with(s) {
            self.pos += s.len();
            true
        } else {
            false
        }
    }

    fn value(&mut self) -> Result<Value, ParseError> {
        self.skip_ws();
        if self.eat("⊥") || self.eat("bot") {
            return Ok(Value::Bot);
        }
        if self.eat("ok") {
            return Ok(Value::Unit);
        }
        if self.eat("true") {
            return Ok(Value::Bool(true));
        }
        if self.eat("false") {
            return Ok(Value::Bool(false));
        }
        if self.eat("(") {
            return Ok(Value::Tuple(self.items(")")?));
        }
        if self.eat("[") {
            return Ok(Value::Vector(self.items("]")?));
        }
        let rest = self.rest();
        let len = rest
            .char_indices()
            .take_while(|&(i, c)| c.is_ascii_digit() || (i == 0 && c == '-'))
            .count();
        if len == 0 {
            return Err(self.err("expected a value"));
        }
        let v = rest[..len].parse::<i64>().map_err(|e| self.err(e.to_string()))?;
        self.pos += len;
        Ok(Value::Int(v))
    }

    fn items(&mut self, close: &str) -> Result<Vec<Value>, ParseError> {
        let mut out = Vec::new();
        if self.eat(close) {
            return Ok(out);
        }
        loop {
            out.push(self.value()?);
            if self.eat(close) {
                return Ok(out);
            }
            if !self.eat(",") {
                return Err(self.err(format!("expected `,` or `{close}`")));
            }
        }
    }

    fn ident(&mut self) -> Result<&'a str, ParseError> {
        self.skip_ws();
        let rest = self.rest();
        let len = rest
            .char_indices()
            .take_while(|&(i, c)| c == '_' || c.is_ascii_alphabetic() || (i > 0 && c.is_ascii_alphanumeric()))
            .count();
        if len == 0 {
            return Err(self.err("expected an identifier"));
        }
        self.pos += len;
        Ok(&rest[..len])
    }

    fn finish(&mut self) -> Result<(), ParseError> {
        self.skip_ws();
        if self.pos == self.src.len() {
            Ok(())
        } else {
            Err(self.err("trailing input"))
        }
    }
}

impl FromStr for Value {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut p = Parser::new(s);
        let v = p.value()?;
        p.finish()?;
        Ok(v)
    }
}

/// An invocation description: an operation name with its arguments.
///
/// The invoking process is carried separately (by events and sequential
/// histories), so the same description can be issued by any process.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Invocation {
    pub name: Arc<str>,
    pub args: Vec<Value>,
}

impl Invocation {
    pub fn new(name: &str, args: Vec<Value>) -> Self {
        Invocation { name: Arc::from(name), args }
    }

    pub fn nullary(name: &str) -> Self {
        Invocation::new(name, Vec::new())
    }

    pub fn unary(name: &str, arg: Value) -> Self {
        Invocation::new(name, vec![arg])
    }

    pub fn is(&self, name: &str) -> bool {
        &*self.name == name
    }

    pub fn arg(&self, i: usize) -> Option<&Value> {
        self.args.get(i)
    }
}

impl fmt::Display for Invocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)?;
        write_seq(f, "(", ")", &self.args)
    }
}

impl FromStr for Invocation {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut p = Parser::new(s);
        let name = p.ident()?;
        if !p.eat("(") {
            return Err(p.err("expected `(`"));
        }
        let args = p.items(")")?;
        p.finish()?;
        Ok(Invocation::new(name, args))
    }
}

/// Wrapper for bookkeeping data that must not influence state identity.
///
/// `Ignored<T>` compares equal to every other `Ignored<T>` and hashes to
/// nothing, so machine fingerprints only see behaviour-relevant state.
#[derive(Clone, Debug, Default)]
pub struct Ignored<T>(pub T);

impl<T> PartialEq for Ignored<T> {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl<T> Eq for Ignored<T> {}

impl<T> Hash for Ignored<T> {
    fn hash<H: Hasher>(&self, _: &mut H) {}
}

impl<T> std::ops::Deref for Ignored<T> {
    type Target = T;
    fn deref(&self) -> &T {
        &self.0
    }
}

impl<T> std::ops::DerefMut for Ignored<T> {
    fn deref_mut(&mut self) -> &mut T {
        &mut self.0
    }
}

/// 128-bit fingerprint of any hashable value (two independently keyed
/// 64-bit hashes).
pub fn fingerprint<T: Hash + ?Sized>(v: &T) -> u128 {
    use std::collections::hash_map::DefaultHasher;
    let mut a = DefaultHasher::new();
    0xa5a5_u16.hash(&mut a);
    v.hash(&mut a);
    let mut b = DefaultHasher::new();
    0x5a5a_5a5a_u32.hash(&mut b);
    v.hash(&mut b);
    ((a.finish() as u128) << 64) | b.finish() as u128
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_round_trips_through_text() {
        let samples = [
            Value::Bot,
            Value::Unit,
            Value::Bool(true),
            Value::Int(-3),
            Value::Tuple(vec![Value::Int(7), Value::Bool(false)]),
            Value::Vector(vec![Value::Bot, Value::Int(2), Value::Tuple(vec![Value::Bot, Value::Int(0)])]),
            Value::Vector(vec![]),
        ];
        for v in samples {
            let text = v.to_string();
            assert_eq!(text.parse::<Value>().unwrap(), v, "{text}");
        }
    }

    #[test]
    fn invocation_round_trips_through_text() {
        for s in ["DRead()", "DWrite(3)", "update([1,⊥])", "maxWrite(0)"] {
            let inv: Invocation = s.parse().unwrap();
            assert_eq!(inv.to_string(), s);
        }
        assert!("DRead".parse::<Invocation>().is_err());
        assert!("DWrite(1".parse::<Invocation>().is_err());
    }

    #[test]
    fn ignored_fields_do_not_affect_identity() {
        #[derive(Hash, PartialEq, Eq)]
        struct S {
            a: u32,
            b: Ignored<u64>,
        }
        let x = S { a: 1, b: Ignored(5) };
        let y = S { a: 1, b: Ignored(9) };
        assert!(x == y);
        assert_eq!(fingerprint(&x), fingerprint(&y));
        assert_ne!(fingerprint(&x), fingerprint(&S { a: 2, b: Ignored(5) }));
    }
}
