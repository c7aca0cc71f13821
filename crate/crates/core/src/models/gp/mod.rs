//! Symbolic saliency programs evolved by genetic programming.
//!
//! A program is a single expression tree over image planes. Its canonical
//! text form is prefix notation:
//!
//! ```text
//! expr     := terminal | "(" function expr+ ")"
//! terminal := red | green | blue | gray
//!           | smooth-red | smooth-green | smooth-blue | smooth-gray
//! function := add | sub | mul | div          (two arguments)
//!           | abs | sq | blur | sobel
//!           | dilate | erode | norm          (one argument)
//! ```
//!
//! Tokens are separated by whitespace or parentheses; the printer emits
//! single spaces, so `to_string` of a parsed program is canonical.

mod eval;
mod train;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

pub use eval::{gp_evaluate, TerminalPlanes, SMOOTHING_SIGMA};
pub use train::{gp_train, EvolutionParams, GenerationStats, TrainOutcome};

use super::SodModel;
use crate::error::{Error, Result};
use crate::imagekit::{Image, SaliencyMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Terminal {
    Red,
    Green,
    Blue,
    Gray,
    SmoothRed,
    SmoothGreen,
    SmoothBlue,
    SmoothGray,
}

impl Terminal {
    pub const ALL: [Terminal; 8] = [
        Terminal::Red,
        Terminal::Green,
        Terminal::Blue,
        Terminal::Gray,
        Terminal::SmoothRed,
        Terminal::SmoothGreen,
        Terminal::SmoothBlue,
        Terminal::SmoothGray,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Terminal::Red => "red",
            Terminal::Green => "green",
            Terminal::Blue => "blue",
            Terminal::Gray => "gray",
            Terminal::SmoothRed => "smooth-red",
            Terminal::SmoothGreen => "smooth-green",
            Terminal::SmoothBlue => "smooth-blue",
            Terminal::SmoothGray => "smooth-gray",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Function {
    Add,
    Sub,
    Mul,
    /// Protected: returns 1 where `|denominator| < 1e-12`.
    Div,
    Abs,
    Square,
    /// 3×3 box mean.
    Blur,
    Sobel,
    Dilate,
    Erode,
    /// Min-max normalization.
    Normalize,
}

impl Function {
    pub const ALL: [Function; 11] = [
        Function::Add,
        Function::Sub,
        Function::Mul,
        Function::Div,
        Function::Abs,
        Function::Square,
        Function::Blur,
        Function::Sobel,
        Function::Dilate,
        Function::Erode,
        Function::Normalize,
    ];

    pub fn arity(self) -> usize {
        match self {
            Function::Add | Function::Sub | Function::Mul | Function::Div => 2,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Function::Add => "add",
            Function::Sub => "sub",
            Function::Mul => "mul",
            Function::Div => "div",
            Function::Abs => "abs",
            Function::Square => "sq",
            Function::Blur => "blur",
            Function::Sobel => "sobel",
            Function::Dilate => "dilate",
            Function::Erode => "erode",
            Function::Normalize => "norm",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Node {
    Leaf(Terminal),
    Apply(Function, Vec<Node>),
}

impl Node {
    pub fn apply1(f: Function, a: Node) -> Node {
        Node::Apply(f, vec![a])
    }

    pub fn apply2(f: Function, a: Node, b: Node) -> Node {
        Node::Apply(f, vec![a, b])
    }

    /// A leaf has depth 1.
    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf(_) => 1,
            Node::Apply(_, args) => 1 + args.iter().map(Node::depth).max().unwrap_or(0),
        }
    }

    pub fn size(&self) -> usize {
        match self {
            Node::Leaf(_) => 1,
            Node::Apply(_, args) => 1 + args.iter().map(Node::size).sum::<usize>(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Node::Leaf(_) => Ok(()),
            Node::Apply(f, args) => {
                if args.len() != f.arity() {
                    return Err(Error::MalformedProgram(format!(
                        "`{}` takes {} argument(s), got {}",
                        f.name(),
                        f.arity(),
                        args.len()
                    )));
                }
                args.iter().try_for_each(Node::validate)
            }
        }
    }

    /// Preorder traversal index `i`.
    pub fn subtree(&self, i: usize) -> Option<&Node> {
        fn walk<'a>(n: &'a Node, i: &mut usize) -> Option<&'a Node> {
            if *i == 0 {
                return Some(n);
            }
            *i -= 1;
            if let Node::Apply(_, args) = n {
                for a in args {
                    if let Some(found) = walk(a, i) {
                        return Some(found);
                    }
                }
            }
            None
        }
        walk(self, &mut { i })
    }

    pub fn subtree_mut(&mut self, i: usize) -> Option<&mut Node> {
        fn walk<'a>(n: &'a mut Node, i: &mut usize) -> Option<&'a mut Node> {
            if *i == 0 {
                return Some(n);
            }
            *i -= 1;
            if let Node::Apply(_, args) = n {
                for a in args {
                    if let Some(found) = walk(a, i) {
                        return Some(found);
                    }
                }
            }
            None
        }
        walk(self, &mut { i })
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Leaf(t) => f.write_str(t.name()),
            Node::Apply(func, args) => {
                write!(f, "({}", func.name())?;
                for a in args {
                    write!(f, " {a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// A validated expression tree.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GpProgram {
    root: Node,
}

impl GpProgram {
    pub fn new(root: Node) -> Result<Self> {
        root.validate()?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn size(&self) -> usize {
        self.root.size()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        std::fs::read_to_string(path)
            .map_err(|e| Error::io(path, e))?
            .parse()
    }

    /// Writes the canonical text followed by a newline.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, format!("{self}\n")).map_err(|e| Error::io(path, e))
    }
}

impl fmt::Display for GpProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt(f)
    }
}

fn tokenize(s: &str) -> Vec<&str> {
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, ch) in s.char_indices() {
        if ch == '(' || ch == ')' || ch.is_whitespace() {
            if let Some(st) = start.take() {
                tokens.push(&s[st..i]);
            }
            if !ch.is_whitespace() {
                tokens.push(&s[i..i + 1]);
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(st) = start {
        tokens.push(&s[st..]);
    }
    tokens
}

struct Parser<'a> {
    tokens: Vec<&'a str>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn next(&mut self) -> Option<&'a str> {
        let t = self.tokens.get(self.pos).copied();
        self.pos += 1;
        t
    }

    fn peek(&self) -> Option<&'a str> {
        self.tokens.get(self.pos).copied()
    }

    fn node(&mut self) -> Result<Node> {
        let malformed = |m: String| Error::MalformedProgram(m);
        match self.next() {
            None => Err(malformed("unexpected end of input".into())),
            Some("(") => {
                let name = self.next().ok_or_else(|| malformed("missing function name".into()))?;
                let func = Function::ALL
                    .into_iter()
                    .find(|f| f.name() == name)
                    .ok_or_else(|| malformed(format!("unknown function `{name}`")))?;
                let mut args = Vec::new();
                loop {
                    match self.peek() {
                        Some(")") => {
                            self.pos += 1;
                            break;
                        }
                        None => return Err(malformed(format!("unclosed `({name}`"))),
                        Some(_) => args.push(self.node()?),
                    }
                }
                if args.len() != func.arity() {
                    return Err(malformed(format!(
                        "`{name}` takes {} argument(s), got {}",
                        func.arity(),
                        args.len()
                    )));
                }
                Ok(Node::Apply(func, args))
            }
            Some(")") => Err(malformed("unexpected `)`".into())),
            Some(tok) => Terminal::ALL
                .into_iter()
                .find(|t| t.name() == tok)
                .map(Node::Leaf)
                .ok_or_else(|| malformed(format!("unknown terminal `{tok}`"))),
        }
    }
}

impl FromStr for GpProgram {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parser = Parser {
            tokens: tokenize(s),
            pos: 0,
        };
        let root = parser.node()?;
        if let Some(extra) = parser.peek() {
            return Err(Error::MalformedProgram(format!("trailing token `{extra}`")));
        }
        GpProgram::new(root)
    }
}

/// A trained program used as a detector.
#[derive(Clone, Debug)]
pub struct GpModel {
    name: String,
    program: GpProgram,
}

impl GpModel {
    pub fn new(name: impl Into<String>, program: GpProgram) -> Self {
        Self {
            name: name.into(),
            program,
        }
    }

    pub fn program(&self) -> &GpProgram {
        &self.program
    }
}

impl SodModel for GpModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn predict(&self, img: &Image) -> Result<SaliencyMap> {
        gp_evaluate(&self.program, img)
    }
}
