use thiserror::Error;

use super::{SetupExpr, SkillId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("arity error at {pos}: {message}")]
    Arity { pos: usize, message: String },
    #[error("constraint error at {pos}: {message}")]
    Constraint { pos: usize, message: String },
}

impl ParseError {
    pub fn position(&self) -> usize {
        match self {
            Self::Syntax { pos, .. } | Self::Arity { pos, .. } | Self::Constraint { pos, .. } => *pos,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    LParen,
    RParen,
    Comma,
    Colon,
    Equals,
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(src: &'a str) -> Result<Vec<(Tok, usize)>, ParseError> {
        let mut lx = Lexer { src, pos: 0 };
        let mut out = Vec::new();
        loop {
            let (tok, at) = lx.next()?;
            let end = tok == Tok::End;
            out.push((tok, at));
            if end {
                return Ok(out);
            }
        }
    }

    fn next(&mut self) -> Result<(Tok, usize), ParseError> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&b) = bytes.get(self.pos) else {
            return Ok((Tok::End, start));
        };
        let single = match b {
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            b',' => Some(Tok::Comma),
            b':' => Some(Tok::Colon),
            b'=' => Some(Tok::Equals),
            _ => None,
        };
        if let Some(t) = single {
            self.pos += 1;
            return Ok((t, start));
        }
        if b.is_ascii_alphabetic() || b == b'_' {
            while self.pos < bytes.len()
                && (bytes[self.pos].is_ascii_alphanumeric() || matches!(bytes[self.pos], b'_' | b'-' | b'.'))
            {
                self.pos += 1;
            }
            return Ok((Tok::Ident(self.src[start..self.pos].to_string()), start));
        }
        if b.is_ascii_digit() || b == b'.' {
            while self.pos < bytes.len() && (bytes[self.pos].is_ascii_digit() || bytes[self.pos] == b'.') {
                self.pos += 1;
            }
            let text = &self.src[start..self.pos];
            let value: f64 = text.parse().map_err(|_| ParseError::Syntax {
                pos: start,
                message: format!("malformed number `{text}`"),
            })?;
            return Ok((Tok::Number(value), start));
        }
        let ch = self.src[start..].chars().next().unwrap_or('?');
        Err(ParseError::Syntax { pos: start, message: format!("unexpected character `{ch}`") })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    And,
    Or,
    Pick,
    Part,
}

impl Op {
    fn from_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "and" => Some(Self::And),
            "or" => Some(Self::Or),
            "pick" => Some(Self::Pick),
            "part" => Some(Self::Part),
            _ => None,
        }
    }
}

/// Parses a set-up expression.
pub fn parse(text: &str) -> Result<SetupExpr, ParseError> {
    let tokens = Lexer::tokens(text)?;
    let mut p = Parser { tokens, idx: 0 };
    let (expr, _) = p.expr()?;
    let (tok, at) = p.peek();
    if *tok != Tok::End {
        return Err(ParseError::Syntax { pos: at, message: "trailing input after expression".into() });
    }
    if let SetupExpr::Part { .. } = expr {
        return Err(ParseError::Constraint {
            pos: 0,
            message: "part() needs a surrounding and() or or()".into(),
        });
    }
    Ok(expr)
}

struct Parser {
    tokens: Vec<(Tok, usize)>,
    idx: usize,
}

impl Parser {
    fn peek(&self) -> (&Tok, usize) {
        let (t, p) = &self.tokens[self.idx];
        (t, *p)
    }

    fn peek_at(&self, offset: usize) -> &Tok {
        self.tokens.get(self.idx + offset).map(|(t, _)| t).unwrap_or(&Tok::End)
    }

    fn bump(&mut self) -> (Tok, usize) {
        let out = self.tokens[self.idx].clone();
        if self.idx + 1 < self.tokens.len() {
            self.idx += 1;
        }
        out
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<usize, ParseError> {
        let (tok, at) = self.bump();
        if tok == want {
            Ok(at)
        } else {
            Err(ParseError::Syntax { pos: at, message: format!("expected {what}") })
        }
    }

    /// Returns the expression and its start offset.
    fn expr(&mut self) -> Result<(SetupExpr, usize), ParseError> {
        let (tok, at) = self.bump();
        let name = match tok {
            Tok::Ident(name) => name,
            _ => return Err(ParseError::Syntax { pos: at, message: "expected skill or operator".into() }),
        };
        if *self.peek().0 != Tok::LParen {
            return Ok((SetupExpr::Skill(SkillId::new(name)), at));
        }
        let op = Op::from_name(&name).ok_or_else(|| ParseError::Syntax {
            pos: at,
            message: format!("unknown operator `{name}`"),
        })?;
        self.bump();
        let expr = match op {
            Op::And | Op::Or => self.and_or(op, at)?,
            Op::Part => self.part(at)?,
            Op::Pick => self.pick(at)?,
        };
        self.expect(Tok::RParen, "`)`")?;
        Ok((expr, at))
    }

    fn child_list(&mut self) -> Result<Vec<(SetupExpr, usize)>, ParseError> {
        let mut children = vec![self.expr()?];
        while *self.peek().0 == Tok::Comma {
            self.bump();
            children.push(self.expr()?);
        }
        Ok(children)
    }

    fn and_or(&mut self, op: Op, at: usize) -> Result<SetupExpr, ParseError> {
        let children = self.child_list()?;
        if children.len() < 2 {
            return Err(ParseError::Arity {
                pos: at,
                message: format!("{} needs at least two children", if op == Op::And { "and" } else { "or" }),
            });
        }
        let children = children.into_iter().map(|(c, _)| c).collect();
        Ok(if op == Op::And { SetupExpr::And(children) } else { SetupExpr::Or(children) })
    }

    fn part(&mut self, at: usize) -> Result<SetupExpr, ParseError> {
        let (child, child_at) = self.expr()?;
        reject_nested_part(&child, child_at)?;
        if *self.peek().0 != Tok::Comma {
            return Err(ParseError::Arity {
                pos: at,
                message: "part takes exactly one child and a fraction".into(),
            });
        }
        self.bump();
        let (tok, num_at) = self.bump();
        let fraction = match tok {
            Tok::Number(v) => v,
            Tok::Ident(_) => {
                return Err(ParseError::Arity {
                    pos: num_at,
                    message: "part takes exactly one child and a fraction".into(),
                })
            }
            _ => return Err(ParseError::Syntax { pos: num_at, message: "expected fraction".into() }),
        };
        if *self.peek().0 == Tok::Comma {
            return Err(ParseError::Arity {
                pos: at,
                message: "part takes exactly one child and a fraction".into(),
            });
        }
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(ParseError::Constraint {
                pos: num_at,
                message: format!("part fraction {fraction} must lie strictly between 0 and 1"),
            });
        }
        Ok(SetupExpr::Part { child: Box::new(child), fraction })
    }

    fn pick(&mut self, at: usize) -> Result<SetupExpr, ParseError> {
        let mut children = Vec::new();
        let mut weights: Vec<Option<f64>> = Vec::new();
        let mut choose: Option<usize> = None;
        loop {
            let is_k = matches!(self.peek().0, Tok::Ident(s) if s.eq_ignore_ascii_case("k"))
                && *self.peek_at(1) == Tok::Equals;
            if is_k {
                let (_, k_at) = self.bump();
                self.bump();
                let (tok, num_at) = self.bump();
                match tok {
                    Tok::Number(v) if v.fract() == 0.0 && v >= 1.0 => choose = Some(v as usize),
                    _ => {
                        return Err(ParseError::Syntax {
                            pos: num_at,
                            message: "k must be a positive integer".into(),
                        })
                    }
                }
                if *self.peek().0 != Tok::RParen {
                    return Err(ParseError::Syntax { pos: k_at, message: "k=... must be the last argument".into() });
                }
                break;
            }
            let (child, child_at) = self.expr()?;
            reject_nested_part(&child, child_at)?;
            children.push(child);
            if *self.peek().0 == Tok::Colon {
                self.bump();
                let (tok, num_at) = self.bump();
                match tok {
                    Tok::Number(v) => weights.push(Some(v)),
                    _ => return Err(ParseError::Syntax { pos: num_at, message: "expected weight".into() }),
                }
            } else {
                weights.push(None);
            }
            if *self.peek().0 != Tok::Comma {
                break;
            }
            self.bump();
        }
        if children.is_empty() {
            return Err(ParseError::Arity { pos: at, message: "pick needs at least one child".into() });
        }
        let choose = choose.unwrap_or(1);
        if choose > children.len() {
            return Err(ParseError::Constraint {
                pos: at,
                message: format!("pick k={choose} exceeds its {} children", children.len()),
            });
        }
        let given = weights.iter().filter(|w| w.is_some()).count();
        let weights = match given {
            0 => None,
            n if n == children.len() => {
                let w: Vec<f64> = weights.into_iter().flatten().collect();
                if choose != 1 {
                    return Err(ParseError::Constraint {
                        pos: at,
                        message: "weights are only allowed when picking one child".into(),
                    });
                }
                if w.iter().any(|x| !(*x > 0.0)) {
                    return Err(ParseError::Constraint { pos: at, message: "pick weights must be positive".into() });
                }
                let total: f64 = w.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(ParseError::Constraint {
                        pos: at,
                        message: format!("pick weights sum to {total}, not 1"),
                    });
                }
                Some(w)
            }
            _ => {
                return Err(ParseError::Constraint {
                    pos: at,
                    message: "either every pick child has a weight or none does".into(),
                })
            }
        };
        Ok(SetupExpr::Pick { children, weights, choose })
    }
}

fn reject_nested_part(child: &SetupExpr, at: usize) -> Result<(), ParseError> {
    if let SetupExpr::Part { .. } = child {
        return Err(ParseError::Constraint {
            pos: at,
            message: "part() may only appear directly under and() or or()".into(),
        });
    }
    Ok(())
}
