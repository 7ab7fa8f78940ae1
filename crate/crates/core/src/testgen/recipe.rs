//! Declarative recipes: a small statement language interpreted against a
//! seeded stream.
//!
//! ```json
//! [
//!   {"let": {"name": "n", "value": [1, 100000]}},
//!   {"line": {"values": ["n"]}},
//!   {"sequence": {"length": "n", "min": 1, "max": 1000000000}},
//!   {"tree": {"n": "n"}}
//! ]
//! ```
//!
//! An expression is an integer literal, a variable name, or a two-element
//! `[lo, hi]` array drawn uniformly (bounds are themselves expressions).
//! Every emitted line ends with `\n`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::generators::{gen_graph, gen_sequence, gen_string, gen_tree, Edge, GraphFlags};
use super::rng::SplitMix64;
use super::TestgenError;

/// Upper bound on one generated input, to stop runaway recipes.
pub const MAX_INPUT_BYTES: usize = 256 << 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Expr {
    Int(i64),
    Var(String),
    Range(Box<Expr>, Box<Expr>),
}

impl From<i64> for Expr {
    fn from(v: i64) -> Self {
        Expr::Int(v)
    }
}

fn default_sep() -> String {
    " ".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stmt {
    /// Bind a variable.
    Let { name: String, value: Expr },
    /// One line of space-separated integers.
    Line { values: Vec<Expr> },
    /// One line of literal text.
    Text { value: String },
    /// One line of `length` integers in `[min, max]`.
    Sequence {
        length: Expr,
        min: Expr,
        max: Expr,
        #[serde(default = "default_sep")]
        sep: String,
    },
    /// One line of `length` characters drawn from `alphabet`.
    String { length: Expr, alphabet: String },
    /// `n - 1` lines `u v`.
    Tree { n: Expr },
    /// `m` lines `u v`.
    Graph {
        n: Expr,
        m: Expr,
        #[serde(flatten)]
        flags: GraphFlags,
    },
    /// Run `body` `times` times; variables bound inside stay visible.
    Repeat { times: Expr, body: Vec<Stmt> },
}

struct Interp<'a> {
    rng: &'a mut SplitMix64,
    vars: BTreeMap<String, i64>,
    out: String,
}

impl Interp<'_> {
    fn eval(&mut self, expr: &Expr) -> Result<i64, TestgenError> {
        match expr {
            Expr::Int(v) => Ok(*v),
            Expr::Var(name) => {
                self.vars.get(name).copied().ok_or_else(|| TestgenError::UnknownVariable(name.clone()))
            }
            Expr::Range(lo, hi) => {
                let (lo, hi) = (self.eval(lo)?, self.eval(hi)?);
                if lo > hi {
                    return Err(TestgenError::Param(format!("empty range [{lo}, {hi}]")));
                }
                Ok(self.rng.range_i64(lo, hi))
            }
        }
    }

    fn count(&mut self, expr: &Expr, what: &str) -> Result<usize, TestgenError> {
        let v = self.eval(expr)?;
        usize::try_from(v).map_err(|_| TestgenError::Param(format!("{what} must be >= 0, got {v}")))
    }

    fn guard(&self) -> Result<(), TestgenError> {
        if self.out.len() > MAX_INPUT_BYTES {
            return Err(TestgenError::Param(format!("input exceeds {MAX_INPUT_BYTES} bytes")));
        }
        Ok(())
    }

    fn edges(&mut self, edges: &[Edge]) {
        for (u, v) in edges {
            let _ = writeln!(self.out, "{u} {v}");
        }
    }

    fn run(&mut self, stmts: &[Stmt]) -> Result<(), TestgenError> {
        for stmt in stmts {
            match stmt {
                Stmt::Let { name, value } => {
                    let v = self.eval(value)?;
                    self.vars.insert(name.clone(), v);
                }
                Stmt::Line { values } => {
                    let mut parts = Vec::with_capacity(values.len());
                    for e in values {
                        parts.push(self.eval(e)?.to_string());
                    }
                    self.out.push_str(&parts.join(" "));
                    self.out.push('\n');
                }
                Stmt::Text { value } => {
                    self.out.push_str(value);
                    self.out.push('\n');
                }
                Stmt::Sequence { length, min, max, sep } => {
                    let len = self.count(length, "sequence length")?;
                    let (lo, hi) = (self.eval(min)?, self.eval(max)?);
                    let values = gen_sequence(len, lo, hi, self.rng)?;
                    for (i, v) in values.iter().enumerate() {
                        if i > 0 {
                            self.out.push_str(sep);
                        }
                        let _ = write!(self.out, "{v}");
                    }
                    self.out.push('\n');
                }
                Stmt::String { length, alphabet } => {
                    let len = self.count(length, "string length")?;
                    let chars: Vec<char> = alphabet.chars().collect();
                    let s = gen_string(len, &chars, self.rng)?;
                    self.out.push_str(&s);
                    self.out.push('\n');
                }
                Stmt::Tree { n } => {
                    let n = self.count(n, "tree size")?;
                    let edges = gen_tree(n, self.rng)?;
                    self.edges(&edges);
                }
                Stmt::Graph { n, m, flags } => {
                    let n = self.count(n, "node count")?;
                    let m = self.count(m, "edge count")?;
                    let edges = gen_graph(n, m, *flags, self.rng)?;
                    self.edges(&edges);
                }
                Stmt::Repeat { times, body } => {
                    let times = self.count(times, "repeat count")?;
                    for _ in 0..times {
                        self.run(body)?;
                        self.guard()?;
                    }
                }
            }
            self.guard()?;
        }
        Ok(())
    }
}

/// Render a recipe to input text.
pub fn render(recipe: &[Stmt], rng: &mut SplitMix64) -> Result<String, TestgenError> {
    let mut interp = Interp { rng, vars: BTreeMap::new(), out: String::new() };
    interp.run(recipe)?;
    Ok(interp.out)
}
