use super::{GraphQuery, GraphQueryError, PatternEdge, Slot};

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, GraphQueryError> {
        Err(GraphQueryError::Syntax {
            offset: self.pos,
            message: message.into(),
        })
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

    fn expect(&mut self, s: &str) -> Result<(), GraphQueryError> {
        if self.eat(s) {
            Ok(())
        } else {
            self.error(format!("expected `{s}`"))
        }
    }

    fn word(&mut self) -> &'a str {
        self.skip_ws();
        let rest = self.rest();
        let len = rest
            .find(|c: char| !(c.is_alphanumeric() || c == '_'))
            .unwrap_or(rest.len());
        self.pos += len;
        &rest[..len]
    }

    fn peek_keyword(&mut self, kw: &str) -> bool {
        let save = self.pos;
        let hit = self.word().eq_ignore_ascii_case(kw);
        self.pos = save;
        hit
    }

    fn keyword(&mut self, kw: &str) -> Result<(), GraphQueryError> {
        self.skip_ws();
        let start = self.pos;
        if self.word().eq_ignore_ascii_case(kw) {
            Ok(())
        } else {
            self.pos = start;
            self.error(format!("expected {kw}"))
        }
    }

    fn slot(&mut self) -> Result<Slot, GraphQueryError> {
        self.skip_ws();
        let start = self.pos;
        let w = self.word();
        w.parse().or_else(|_| {
            self.pos = start;
            self.error("expected a slot such as `n1`")
        })
    }

    fn relation(&mut self) -> Result<String, GraphQueryError> {
        self.expect("[")?;
        let start = self.pos;
        let Some(len) = self.rest().find(']') else {
            return self.error("unterminated relation");
        };
        let raw = self.rest()[..len].trim();
        let name = raw.strip_prefix(':').unwrap_or(raw).trim();
        if name.is_empty() {
            self.pos = start;
            return self.error("empty relation name");
        }
        self.pos += len + 1;
        Ok(name.to_string())
    }

    fn forward_arrow(&mut self) -> bool {
        self.eat("->") || self.eat("→") || (self.eat("-") && self.eat(">"))
    }

    fn edge(&mut self) -> Result<PatternEdge, GraphQueryError> {
        let first = self.slot()?;
        if self.eat("<-") || self.eat("←") {
            let relation = self.relation()?;
            self.expect("-")?;
            let head = self.slot()?;
            return Ok(PatternEdge {
                head,
                relation,
                tail: first,
            });
        }
        self.expect("-")?;
        let relation = self.relation()?;
        if !self.forward_arrow() {
            return self.error("expected `->`");
        }
        let tail = self.slot()?;
        Ok(PatternEdge {
            head: first,
            relation,
            tail,
        })
    }

    fn z_guard(&mut self) -> Result<(), GraphQueryError> {
        self.skip_ws();
        let w = self.word();
        if w != "Z" && w != "Z_n" && w != "z" {
            return self.error("only the `Z > 0` guard is supported");
        }
        self.expect(">")?;
        self.skip_ws();
        if self.word() != "0" {
            return self.error("only the `Z > 0` guard is supported");
        }
        Ok(())
    }
}

/// Parses `MATCH <edges> [WHERE Z > 0] RETURN <slots>`.
///
/// Edges are written `n1-[Rel]->n2` (`→` is accepted for `->`) or
/// `n2<-[Rel]-n1`; a leading `:` in the relation is ignored.
pub fn parse(text: &str) -> Result<GraphQuery, GraphQueryError> {
    let mut c = Cursor { src: text, pos: 0 };
    c.keyword("MATCH")?;
    let mut pattern = vec![c.edge()?];
    while c.eat(",") {
        pattern.push(c.edge()?);
    }
    let mut z_guarded = false;
    if c.peek_keyword("WHERE") {
        c.keyword("WHERE")?;
        c.z_guard()?;
        z_guarded = true;
    }
    c.keyword("RETURN")?;
    let mut return_slots = vec![c.slot()?];
    while c.eat(",") {
        return_slots.push(c.slot()?);
    }
    c.eat(";");
    c.skip_ws();
    if !c.rest().is_empty() {
        return c.error("unexpected trailing input");
    }
    GraphQuery::new(pattern, return_slots, z_guarded)
}
