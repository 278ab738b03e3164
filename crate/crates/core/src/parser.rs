//! Prolog-style surface syntax: facts `p(a).`, rules `h :- b1, b2.`,
//! `%` comments, `% @from <id>` provenance annotations, and `?- g1, g2.`
//! queries. The cut operator is rejected outright.

use crate::ast::{Atom, Const, HornClause, Term};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {column}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("unexpected character `{0}`")]
    UnexpectedChar(char),
    #[error("expected {expected}, found {found}")]
    Unexpected { expected: String, found: String },
    #[error("unterminated quoted name")]
    UnterminatedQuote,
    #[error("integer literal out of range")]
    IntegerOverflow,
    #[error("the cut operator `!` is not permitted")]
    CutNotPermitted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Name(String),
    Var(String),
    Int(i64),
    Quoted(String),
    LParen,
    RParen,
    Comma,
    Dot,
    Neck,        // :-
    QueryNeck,   // ?-
    Cut,         // !
    Provenance(String),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Name(n) => format!("`{n}`"),
            Tok::Var(v) => format!("variable `{v}`"),
            Tok::Int(i) => format!("integer `{i}`"),
            Tok::Quoted(q) => format!("quoted name `{q}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Neck => "`:-`".into(),
            Tok::QueryNeck => "`?-`".into(),
            Tok::Cut => "`!`".into(),
            Tok::Provenance(_) => "provenance annotation".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    column: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            chars: src.chars().peekable(),
            line: 1,
            column: 1,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn error(&self, line: usize, column: usize, kind: ParseErrorKind) -> ParseError {
        ParseError { line, column, kind }
    }

    fn next_token(&mut self) -> Result<Token, ParseError> {
        loop {
            let (line, column) = (self.line, self.column);
            let c = match self.chars.peek() {
                None => {
                    return Ok(Token {
                        tok: Tok::Eof,
                        line,
                        column,
                    })
                }
                Some(c) => *c,
            };
            match c {
                ' ' | '\t' | '\r' | '\n' => {
                    self.bump();
                }
                '%' => {
                    let mut comment = String::new();
                    while let Some(&c) = self.chars.peek() {
                        if c == '\n' {
                            break;
                        }
                        comment.push(c);
                        self.bump();
                    }
                    // `% @from <id>` attaches provenance to the next clause.
                    let body = comment.trim_start_matches('%').trim();
                    if let Some(rest) = body.strip_prefix("@from") {
                        let agent = rest.trim();
                        if !agent.is_empty() {
                            return Ok(Token {
                                tok: Tok::Provenance(agent.to_string()),
                                line,
                                column,
                            });
                        }
                    }
                }
                '(' => {
                    self.bump();
                    return Ok(Token {
                        tok: Tok::LParen,
                        line,
                        column,
                    });
                }
                ')' => {
                    self.bump();
                    return Ok(Token {
                        tok: Tok::RParen,
                        line,
                        column,
                    });
                }
                ',' => {
                    self.bump();
                    return Ok(Token {
                        tok: Tok::Comma,
                        line,
                        column,
                    });
                }
                '.' => {
                    self.bump();
                    return Ok(Token {
                        tok: Tok::Dot,
                        line,
                        column,
                    });
                }
                '!' => {
                    self.bump();
                    return Ok(Token {
                        tok: Tok::Cut,
                        line,
                        column,
                    });
                }
                ':' => {
                    self.bump();
                    if self.chars.peek() == Some(&'-') {
                        self.bump();
                        return Ok(Token {
                            tok: Tok::Neck,
                            line,
                            column,
                        });
                    }
                    return Err(self.error(line, column, ParseErrorKind::UnexpectedChar(':')));
                }
                '?' => {
                    self.bump();
                    if self.chars.peek() == Some(&'-') {
                        self.bump();
                        return Ok(Token {
                            tok: Tok::QueryNeck,
                            line,
                            column,
                        });
                    }
                    return Err(self.error(line, column, ParseErrorKind::UnexpectedChar('?')));
                }
                '\'' => {
                    self.bump();
                    let mut text = String::new();
                    loop {
                        match self.bump() {
                            None => {
                                return Err(self.error(
                                    line,
                                    column,
                                    ParseErrorKind::UnterminatedQuote,
                                ))
                            }
                            Some('\n') => {
                                return Err(self.error(
                                    line,
                                    column,
                                    ParseErrorKind::UnterminatedQuote,
                                ))
                            }
                            Some('\\') => match self.bump() {
                                Some('\\') => text.push('\\'),
                                Some('\'') => text.push('\''),
                                _ => {
                                    return Err(self.error(
                                        line,
                                        column,
                                        ParseErrorKind::UnterminatedQuote,
                                    ))
                                }
                            },
                            Some('\'') => break,
                            Some(other) => text.push(other),
                        }
                    }
                    return Ok(Token {
                        tok: Tok::Quoted(text),
                        line,
                        column,
                    });
                }
                '-' => {
                    self.bump();
                    match self.chars.peek() {
                        Some(d) if d.is_ascii_digit() => {
                            let n = self.lex_digits(line, column)?;
                            return Ok(Token {
                                tok: Tok::Int(n.checked_neg().ok_or_else(|| {
                                    self.error(line, column, ParseErrorKind::IntegerOverflow)
                                })?),
                                line,
                                column,
                            });
                        }
                        _ => {
                            return Err(self.error(
                                line,
                                column,
                                ParseErrorKind::UnexpectedChar('-'),
                            ))
                        }
                    }
                }
                c if c.is_ascii_digit() => {
                    let n = self.lex_digits(line, column)?;
                    return Ok(Token {
                        tok: Tok::Int(n),
                        line,
                        column,
                    });
                }
                c if c.is_ascii_lowercase() => {
                    let name = self.lex_ident();
                    return Ok(Token {
                        tok: Tok::Name(name),
                        line,
                        column,
                    });
                }
                c if c.is_ascii_uppercase() || c == '_' => {
                    let name = self.lex_ident();
                    return Ok(Token {
                        tok: Tok::Var(name),
                        line,
                        column,
                    });
                }
                other => {
                    return Err(self.error(line, column, ParseErrorKind::UnexpectedChar(other)))
                }
            }
        }
    }

    fn lex_digits(&mut self, line: usize, column: usize) -> Result<i64, ParseError> {
        let mut value: i64 = 0;
        while let Some(&c) = self.chars.peek() {
            if !c.is_ascii_digit() {
                break;
            }
            self.bump();
            value = value
                .checked_mul(10)
                .and_then(|v| v.checked_add((c as u8 - b'0') as i64))
                .ok_or_else(|| self.error(line, column, ParseErrorKind::IntegerOverflow))?;
        }
        Ok(value)
    }

    fn lex_ident(&mut self) -> String {
        let mut name = String::new();
        while let Some(&c) = self.chars.peek() {
            if c.is_ascii_alphanumeric() || c == '_' {
                name.push(c);
                self.bump();
            } else {
                break;
            }
        }
        name
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    lookahead: Token,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Result<Self, ParseError> {
        let mut lexer = Lexer::new(src);
        let lookahead = lexer.next_token()?;
        Ok(Parser { lexer, lookahead })
    }

    fn advance(&mut self) -> Result<Token, ParseError> {
        let next = self.lexer.next_token()?;
        Ok(std::mem::replace(&mut self.lookahead, next))
    }

    fn unexpected(&self, expected: &str) -> ParseError {
        let tok = &self.lookahead;
        if tok.tok == Tok::Cut {
            return ParseError {
                line: tok.line,
                column: tok.column,
                kind: ParseErrorKind::CutNotPermitted,
            };
        }
        ParseError {
            line: tok.line,
            column: tok.column,
            kind: ParseErrorKind::Unexpected {
                expected: expected.to_string(),
                found: tok.tok.describe(),
            },
        }
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> Result<(), ParseError> {
        if self.lookahead.tok == tok {
            self.advance()?;
            Ok(())
        } else {
            Err(self.unexpected(expected))
        }
    }

    fn parse_term(&mut self) -> Result<Term, ParseError> {
        match self.lookahead.tok.clone() {
            Tok::Var(v) => {
                self.advance()?;
                Ok(Term::Var(v))
            }
            Tok::Int(i) => {
                self.advance()?;
                Ok(Term::Const(Const::Int(i)))
            }
            Tok::Quoted(q) => {
                self.advance()?;
                Ok(Term::Const(Const::Name(q)))
            }
            Tok::Name(name) => {
                self.advance()?;
                if self.lookahead.tok == Tok::LParen {
                    self.advance()?;
                    let args = self.parse_term_list()?;
                    self.expect(Tok::RParen, "`)`")?;
                    Ok(Term::Compound(name, args))
                } else {
                    Ok(Term::Const(Const::Name(name)))
                }
            }
            _ => Err(self.unexpected("a term")),
        }
    }

    fn parse_term_list(&mut self) -> Result<Vec<Term>, ParseError> {
        let mut terms = vec![self.parse_term()?];
        while self.lookahead.tok == Tok::Comma {
            self.advance()?;
            terms.push(self.parse_term()?);
        }
        Ok(terms)
    }

    fn parse_atom(&mut self) -> Result<Atom, ParseError> {
        let name = match self.lookahead.tok.clone() {
            Tok::Name(name) => {
                self.advance()?;
                name
            }
            _ => return Err(self.unexpected("a predicate name")),
        };
        let mut args = Vec::new();
        if self.lookahead.tok == Tok::LParen {
            self.advance()?;
            args = self.parse_term_list()?;
            self.expect(Tok::RParen, "`)`")?;
        }
        Ok(Atom::new(name, args))
    }

    fn parse_atom_list(&mut self) -> Result<Vec<Atom>, ParseError> {
        let mut atoms = vec![self.parse_atom()?];
        while self.lookahead.tok == Tok::Comma {
            self.advance()?;
            atoms.push(self.parse_atom()?);
        }
        Ok(atoms)
    }

    fn parse_clause(&mut self) -> Result<HornClause, ParseError> {
        let head = self.parse_atom()?;
        let body = if self.lookahead.tok == Tok::Neck {
            self.advance()?;
            self.parse_atom_list()?
        } else {
            Vec::new()
        };
        self.expect(Tok::Dot, "`.`")?;
        Ok(HornClause {
            head,
            body,
            provenance: None,
        })
    }
}

/// Parses a full KB text into clauses, preserving their order. A
/// `% @from <id>` comment attaches to the next clause; when several occur,
/// the closest one wins.
pub fn parse_program(text: &str) -> Result<Vec<HornClause>, ParseError> {
    let mut parser = Parser::new(text)?;
    let mut clauses = Vec::new();
    let mut pending_provenance: Option<String> = None;
    loop {
        match parser.lookahead.tok.clone() {
            Tok::Eof => return Ok(clauses),
            Tok::Provenance(agent) => {
                parser.advance()?;
                pending_provenance = Some(agent);
            }
            _ => {
                let mut clause = parser.parse_clause()?;
                clause.provenance = pending_provenance.take();
                clauses.push(clause);
            }
        }
    }
}

/// Parses a `?- g1, g2.` query into its goal list.
pub fn parse_query(text: &str) -> Result<Vec<Atom>, ParseError> {
    let mut parser = Parser::new(text)?;
    while let Tok::Provenance(_) = parser.lookahead.tok {
        parser.advance()?;
    }
    parser.expect(Tok::QueryNeck, "`?-`")?;
    let goals = parser.parse_atom_list()?;
    parser.expect(Tok::Dot, "`.`")?;
    if parser.lookahead.tok != Tok::Eof {
        return Err(parser.unexpected("end of input"));
    }
    Ok(goals)
}
