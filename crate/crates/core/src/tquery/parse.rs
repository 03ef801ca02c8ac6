use super::{is_reserved, Aggregate, CmpOp, Constraint, Having, QueryError, Selection, TableQuery};

const SPECIAL: &[char] = &[',', '(', ')', '=', '<', '>', '!', '\'', '*', ';'];

pub(crate) fn is_bare(atom: &str) -> bool {
    !atom.is_empty() && atom.chars().all(|c| !c.is_whitespace() && !SPECIAL.contains(&c))
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Word(String),
    Quoted(String),
    Comma,
    LParen,
    RParen,
    Star,
    Semi,
    Op(CmpOp),
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(src: &'a str) -> Result<Vec<(usize, Tok)>, QueryError> {
        let mut lx = Lexer { src, pos: 0 };
        let mut out = Vec::new();
        while let Some(tok) = lx.next_token()? {
            out.push(tok);
        }
        Ok(out)
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn next_token(&mut self) -> Result<Option<(usize, Tok)>, QueryError> {
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
        let start = self.pos;
        let Some(c) = self.bump() else {
            return Ok(None);
        };
        let tok = match c {
            ',' => Tok::Comma,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '*' => Tok::Star,
            ';' => Tok::Semi,
            '=' => {
                if self.peek() == Some('=') {
                    self.bump();
                }
                Tok::Op(CmpOp::Eq)
            }
            '!' => {
                if self.bump() != Some('=') {
                    return Err(QueryError::Syntax {
                        offset: start,
                        message: "expected `!=`".into(),
                    });
                }
                Tok::Op(CmpOp::Neq)
            }
            '<' => match self.peek() {
                Some('=') => {
                    self.bump();
                    Tok::Op(CmpOp::Leq)
                }
                Some('>') => {
                    self.bump();
                    Tok::Op(CmpOp::Neq)
                }
                _ => Tok::Op(CmpOp::Lt),
            },
            '>' => {
                if self.peek() == Some('=') {
                    self.bump();
                    Tok::Op(CmpOp::Geq)
                } else {
                    Tok::Op(CmpOp::Gt)
                }
            }
            '\'' => {
                let mut text = String::new();
                loop {
                    match self.bump() {
                        None => {
                            return Err(QueryError::Syntax {
                                offset: start,
                                message: "unterminated quoted string".into(),
                            })
                        }
                        Some('\'') if self.peek() == Some('\'') => {
                            self.bump();
                            text.push('\'');
                        }
                        Some('\'') => break,
                        Some(ch) => text.push(ch),
                    }
                }
                Tok::Quoted(text)
            }
            _ => {
                while self
                    .peek()
                    .is_some_and(|ch| !ch.is_whitespace() && !SPECIAL.contains(&ch))
                {
                    self.bump();
                }
                Tok::Word(self.src[start..self.pos].to_string())
            }
        };
        Ok(Some((start, tok)))
    }
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    idx: usize,
    end: usize,
}

impl Parser {
    fn offset(&self) -> usize {
        self.toks.get(self.idx).map_or(self.end, |t| t.0)
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.idx).map(|t| &t.1)
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, QueryError> {
        Err(QueryError::Syntax {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(w)) if w.eq_ignore_ascii_case(kw))
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), QueryError> {
        if self.at_keyword(kw) {
            self.idx += 1;
            Ok(())
        } else {
            self.error(format!("expected {kw}"))
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), QueryError> {
        if self.peek() == Some(&tok) {
            self.idx += 1;
            Ok(())
        } else {
            self.error(format!("expected {what}"))
        }
    }

    /// An attribute, table name or literal: a non-reserved bare word or a
    /// quoted string.
    fn atom(&mut self, what: &str) -> Result<String, QueryError> {
        match self.peek() {
            Some(Tok::Word(w)) if !is_reserved(w) => {
                let w = w.clone();
                self.idx += 1;
                Ok(w)
            }
            Some(Tok::Quoted(q)) => {
                let q = q.clone();
                self.idx += 1;
                Ok(q)
            }
            _ => self.error(format!("expected {what}")),
        }
    }

    fn query(&mut self) -> Result<TableQuery, QueryError> {
        self.expect_keyword("SELECT")?;
        let select = if self.peek() == Some(&Tok::Star) {
            self.idx += 1;
            Selection::All
        } else {
            let mut attrs = vec![self.atom("attribute")?];
            while self.peek() == Some(&Tok::Comma) {
                self.idx += 1;
                attrs.push(self.atom("attribute")?);
            }
            Selection::Attributes(attrs)
        };
        self.expect_keyword("FROM")?;
        let from = self.atom("table name")?;

        let mut constraints = Vec::new();
        if self.at_keyword("WHERE") {
            self.idx += 1;
            constraints.push(self.constraint()?);
            while self.at_keyword("AND") {
                self.idx += 1;
                constraints.push(self.constraint()?);
            }
        }
        let mut group_by = None;
        if self.at_keyword("GROUP") {
            self.idx += 1;
            self.expect_keyword("BY")?;
            group_by = Some(self.atom("attribute")?);
        }
        let mut having = None;
        if self.at_keyword("HAVING") {
            self.idx += 1;
            let attribute = self.atom("attribute")?;
            if self.peek() != Some(&Tok::Op(CmpOp::Eq)) {
                return self.error("HAVING supports only `=`");
            }
            self.idx += 1;
            let agg_offset = self.offset();
            let name = match self.peek() {
                Some(Tok::Word(w)) => w.clone(),
                _ => return self.error("expected aggregate"),
            };
            self.idx += 1;
            let aggregate = match Aggregate::from_name(&name) {
                Some(a) => a,
                None => {
                    return Err(QueryError::UnknownAggregate {
                        offset: agg_offset,
                        name,
                    })
                }
            };
            self.expect(Tok::LParen, "`(`")?;
            let argument = self.atom("attribute")?;
            self.expect(Tok::RParen, "`)`")?;
            having = Some(Having {
                attribute,
                aggregate,
                argument,
            });
        }
        if self.peek() == Some(&Tok::Semi) {
            self.idx += 1;
        }
        if self.idx < self.toks.len() {
            return self.error("unexpected trailing input");
        }
        Ok(TableQuery {
            select,
            from,
            constraints,
            group_by,
            having,
        })
    }

    fn constraint(&mut self) -> Result<Constraint, QueryError> {
        let attribute = self.atom("attribute")?;
        let op = match self.peek() {
            Some(Tok::Op(op)) => *op,
            _ => return self.error("expected comparison operator"),
        };
        self.idx += 1;
        let value = self.atom("value")?;
        Ok(Constraint {
            op,
            attribute,
            value,
        })
    }
}

/// Parses one statement. Keywords are case-insensitive; atoms containing
/// spaces or punctuation are written in single quotes (`''` escapes a quote).
pub fn parse(text: &str) -> Result<TableQuery, QueryError> {
    let toks = Lexer::tokens(text)?;
    let mut parser = Parser {
        toks,
        idx: 0,
        end: text.len(),
    };
    parser.query()
}
