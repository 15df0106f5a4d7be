//! Minimal arithmetic expressions for coefficient definitions: numbers, the
//! variables `x` and `y`, the constant `pi`, `+ - * / ^`, parentheses, unary
//! minus, and the functions `sin`, `cos`, `exp`.
//!
//! Grammar (precedence climbing):
//!
//! ```text
//!   expr   := term (('+' | '-') term)*
//!   term   := factor (('*' | '/') factor)*
//!   factor := unary ('^' factor)?
//!   unary  := '-' unary | atom
//!   atom   := number | 'x' | 'y' | 'pi' | func '(' expr ')' | '(' expr ')'
//! ```

use anyhow::{anyhow, bail, Result};

/// A parsed coefficient expression, evaluable at node coordinates.
#[derive(Debug, Clone)]
pub struct Expr {
    root: Node,
    source: String,
}

#[derive(Debug, Clone)]
enum Node {
    Num(f64),
    VarX,
    VarY,
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Neg(Box<Node>),
    Sin(Box<Node>),
    Cos(Box<Node>),
    Exp(Box<Node>),
}

impl Expr {
    pub fn parse(source: &str) -> Result<Self> {
        let tokens = tokenize(source)?;
        let mut parser = Parser { tokens, pos: 0 };
        let root = parser.expr()?;
        if parser.pos != parser.tokens.len() {
            bail!("unexpected trailing input in expression {source:?}");
        }
        Ok(Self { root, source: source.to_string() })
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        eval(&self.root, x, y)
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

fn eval(node: &Node, x: f64, y: f64) -> f64 {
    match node {
        Node::Num(v) => *v,
        Node::VarX => x,
        Node::VarY => y,
        Node::Add(a, b) => eval(a, x, y) + eval(b, x, y),
        Node::Sub(a, b) => eval(a, x, y) - eval(b, x, y),
        Node::Mul(a, b) => eval(a, x, y) * eval(b, x, y),
        Node::Div(a, b) => eval(a, x, y) / eval(b, x, y),
        Node::Pow(a, b) => eval(a, x, y).powf(eval(b, x, y)),
        Node::Neg(a) => -eval(a, x, y),
        Node::Sin(a) => eval(a, x, y).sin(),
        Node::Cos(a) => eval(a, x, y).cos(),
        Node::Exp(a) => eval(a, x, y).exp(),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

fn tokenize(source: &str) -> Result<Vec<Token>> {
    let mut tokens = Vec::new();
    let chars: Vec<char> = source.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' => i += 1,
            '+' => {
                tokens.push(Token::Plus);
                i += 1;
            }
            '-' => {
                tokens.push(Token::Minus);
                i += 1;
            }
            '*' => {
                tokens.push(Token::Star);
                i += 1;
            }
            '/' => {
                tokens.push(Token::Slash);
                i += 1;
            }
            '^' => {
                tokens.push(Token::Caret);
                i += 1;
            }
            '(' => {
                tokens.push(Token::LParen);
                i += 1;
            }
            ')' => {
                tokens.push(Token::RParen);
                i += 1;
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_ascii_digit()
                        || chars[i] == '.'
                        || chars[i] == 'e'
                        || chars[i] == 'E'
                        || ((chars[i] == '+' || chars[i] == '-')
                            && i > start
                            && (chars[i - 1] == 'e' || chars[i - 1] == 'E')))
                {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                let value: f64 =
                    text.parse().map_err(|_| anyhow!("bad number {text:?} in expression"))?;
                tokens.push(Token::Num(value));
            }
            c if c.is_ascii_alphabetic() => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                    i += 1;
                }
                tokens.push(Token::Ident(chars[start..i].iter().collect()));
            }
            other => bail!("unexpected character {other:?} in expression {source:?}"),
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expr(&mut self) -> Result<Node> {
        let mut node = self.term()?;
        while let Some(tok) = self.peek() {
            match tok {
                Token::Plus => {
                    self.next();
                    node = Node::Add(Box::new(node), Box::new(self.term()?));
                }
                Token::Minus => {
                    self.next();
                    node = Node::Sub(Box::new(node), Box::new(self.term()?));
                }
                _ => break,
            }
        }
        Ok(node)
    }

    fn term(&mut self) -> Result<Node> {
        let mut node = self.factor()?;
        while let Some(tok) = self.peek() {
            match tok {
                Token::Star => {
                    self.next();
                    node = Node::Mul(Box::new(node), Box::new(self.factor()?));
                }
                Token::Slash => {
                    self.next();
                    node = Node::Div(Box::new(node), Box::new(self.factor()?));
                }
                _ => break,
            }
        }
        Ok(node)
    }

    fn factor(&mut self) -> Result<Node> {
        let base = self.unary()?;
        if matches!(self.peek(), Some(Token::Caret)) {
            self.next();
            let exponent = self.factor()?; // right associative
            return Ok(Node::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn unary(&mut self) -> Result<Node> {
        if matches!(self.peek(), Some(Token::Minus)) {
            self.next();
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Node> {
        match self.next() {
            Some(Token::Num(v)) => Ok(Node::Num(v)),
            Some(Token::Ident(name)) => match name.as_str() {
                "x" => Ok(Node::VarX),
                "y" => Ok(Node::VarY),
                "pi" => Ok(Node::Num(std::f64::consts::PI)),
                "sin" | "cos" | "exp" => {
                    if !matches!(self.next(), Some(Token::LParen)) {
                        bail!("function {name} needs parentheses");
                    }
                    let inner = self.expr()?;
                    if !matches!(self.next(), Some(Token::RParen)) {
                        bail!("unclosed call to {name}");
                    }
                    Ok(match name.as_str() {
                        "sin" => Node::Sin(Box::new(inner)),
                        "cos" => Node::Cos(Box::new(inner)),
                        _ => Node::Exp(Box::new(inner)),
                    })
                }
                other => bail!("unknown identifier {other:?} (allowed: x, y, pi, sin, cos, exp)"),
            },
            Some(Token::LParen) => {
                let inner = self.expr()?;
                if !matches!(self.next(), Some(Token::RParen)) {
                    bail!("unbalanced parentheses");
                }
                Ok(inner)
            }
            other => bail!("unexpected token {other:?} in expression"),
        }
    }
}
