//! Line-oriented kernel text parser.
//!
//! ```text
//! kernel saxpy(x: ptr, y: ptr, a: float, n: int)
//! block 0():
//!   zero = const 0
//!   br 1(zero)
//! block 1(i):
//!   ...
//!   cbr more 1(next) 2()
//! block 2():
//!   ret
//! ```
//!
//! One statement per line (`;` may also separate statements); `#` starts a
//! comment.

use super::print::{cast_from_suffix, cmp_from_suffix};
use super::*;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(String),
    Punct(char),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    col: usize,
}

fn lex(text: &str, line: usize, col0: usize) -> Result<Vec<Token>, IrError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = col0 + i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if "(),:=".contains(c) {
            out.push(Token { tok: Tok::Punct(c), col });
            i += 1;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '.') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                col,
            });
        } else if c.is_ascii_digit() || c == '-' || c == '.' {
            let start = i;
            i += 1;
            while i < chars.len() {
                let d = chars[i];
                if d.is_ascii_alphanumeric() || d == '_' || d == '.' {
                    i += 1;
                } else if (d == '-' || d == '+')
                    && matches!(chars[i - 1], 'e' | 'E')
                    && !chars[start..i].iter().any(|&x| x == 'x' || x == 'X')
                {
                    i += 1;
                } else {
                    break;
                }
            }
            out.push(Token {
                tok: Tok::Number(chars[start..i].iter().collect()),
                col,
            });
        } else {
            return Err(IrError::Syntax {
                line,
                col,
                msg: format!("unexpected character `{}`", c),
            });
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    toks: &'a [Token],
    pos: usize,
    line: usize,
    end_col: usize,
}

impl<'a> Cursor<'a> {
    fn col(&self) -> usize {
        self.toks.get(self.pos).map(|t| t.col).unwrap_or(self.end_col)
    }

    fn err(&self, msg: impl Into<String>) -> IrError {
        IrError::Syntax {
            line: self.line,
            col: self.col(),
            msg: msg.into(),
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn done(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn ident(&mut self, what: &str) -> Result<String, IrError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.err(format!("expected {}", what))),
        }
    }

    fn number(&mut self, what: &str) -> Result<String, IrError> {
        match self.peek() {
            Some(Tok::Number(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.err(format!("expected {}", what))),
        }
    }

    fn punct(&mut self, c: char) -> Result<(), IrError> {
        if self.peek() == Some(&Tok::Punct(c)) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected `{}`", c)))
        }
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Punct(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    /// `( a, b, ... )` with a possibly empty list.
    fn name_list(&mut self) -> Result<Vec<String>, IrError> {
        self.punct('(')?;
        let mut names = Vec::new();
        if self.eat(')') {
            return Ok(names);
        }
        loop {
            names.push(self.ident("a value name")?);
            if self.eat(')') {
                return Ok(names);
            }
            self.punct(',')?;
        }
    }

    fn block_id(&mut self) -> Result<BlockId, IrError> {
        let col = self.col();
        let s = self.number("a block id")?;
        s.parse::<BlockId>().map_err(|_| IrError::Syntax {
            line: self.line,
            col,
            msg: format!("invalid block id `{}`", s),
        })
    }

    fn edge(&mut self) -> Result<Edge, IrError> {
        let target = self.block_id()?;
        let args = if self.peek() == Some(&Tok::Punct('(')) {
            self.name_list()?
        } else {
            Vec::new()
        };
        Ok(Edge { target, args })
    }

    fn expect_end(&self) -> Result<(), IrError> {
        if self.done() {
            Ok(())
        } else {
            Err(self.err("unexpected trailing tokens"))
        }
    }
}

fn parse_literal(s: &str) -> Option<Literal> {
    let lower = s.to_ascii_lowercase();
    match lower.as_str() {
        "nan" => return Some(Literal::Float(f64::NAN.to_bits())),
        "inf" => return Some(Literal::Float(f64::INFINITY.to_bits())),
        "-inf" => return Some(Literal::Float(f64::NEG_INFINITY.to_bits())),
        _ => {}
    }
    let (neg, body) = match lower.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, lower.as_str()),
    };
    if let Some(hex) = body.strip_prefix("0x") {
        let v = u64::from_str_radix(hex, 16).ok()? as i64;
        return Some(Literal::Int(if neg { v.wrapping_neg() } else { v }));
    }
    if body.contains('.') || body.contains('e') {
        return lower.parse::<f64>().ok().map(|v| Literal::Float(v.to_bits()));
    }
    lower.parse::<i64>().ok().map(Literal::Int)
}

fn parse_param_kind(s: &str) -> Option<ParamKind> {
    match s {
        "int" => Some(ParamKind::Int),
        "float" => Some(ParamKind::Float),
        "ptr" => Some(ParamKind::Ptr),
        _ => None,
    }
}

fn binop_from(m: &str) -> Option<BinOp> {
    BinOp::ALL.iter().copied().find(|b| b.mnemonic() == m)
}

fn parse_statement(cur: &mut Cursor<'_>) -> Result<NodeDraft, IrError> {
    let first = cur.ident("an instruction")?;
    let (result, mnemonic) = if cur.eat('=') {
        (Some(first), cur.ident("an opcode")?)
    } else {
        (None, first)
    };
    let mnemonic_col = cur.toks[cur.pos - 1].col;
    let op = match mnemonic.as_str() {
        "br" => {
            let e = cur.edge()?;
            cur.expect_end()?;
            return Ok(NodeDraft {
                op: Op::Br(e),
                operands: vec![],
                result,
            });
        }
        "cbr" => {
            let cond = cur.ident("a condition value")?;
            let t = cur.edge()?;
            let f = cur.edge()?;
            cur.expect_end()?;
            return Ok(NodeDraft {
                op: Op::CondBr(t, f),
                operands: vec![cond],
                result,
            });
        }
        "ret" | "return" => Op::Ret,
        "load" => Op::Load,
        "store" => Op::Store,
        "send" => Op::Send,
        "recv" => Op::Recv,
        "tile_id" => Op::TileId,
        "num_tiles" => Op::NumTiles,
        "mov" => Op::Mov,
        "select" => Op::Select,
        "accel" => Op::Accel(cur.ident("an accelerator model id")?),
        "const" => {
            let col = cur.col();
            let text = match cur.peek() {
                Some(Tok::Number(s)) | Some(Tok::Ident(s)) => s.clone(),
                _ => return Err(cur.err("expected a literal")),
            };
            cur.pos += 1;
            let lit = parse_literal(&text).ok_or_else(|| IrError::Syntax {
                line: cur.line,
                col,
                msg: format!("invalid literal `{}`", text),
            })?;
            cur.expect_end()?;
            return Ok(NodeDraft {
                op: Op::Const(lit),
                operands: vec![],
                result,
            });
        }
        m => {
            if let Some(b) = binop_from(m) {
                Op::Binary(b)
            } else if let Some(p) = m.strip_prefix("cmp.").and_then(cmp_from_suffix) {
                Op::Cmp(p)
            } else if let Some(c) = m.strip_prefix("cast.").and_then(cast_from_suffix) {
                Op::Cast(c)
            } else {
                return Err(IrError::Syntax {
                    line: cur.line,
                    col: mnemonic_col,
                    msg: format!("unknown opcode `{}`", m),
                });
            }
        }
    };
    let mut operands = Vec::new();
    while !cur.done() {
        operands.push(cur.ident("a value operand")?);
    }
    Ok(NodeDraft {
        op,
        operands,
        result,
    })
}

/// Parse and validate a kernel from its text form.
pub fn parse_kernel(text: &str) -> Result<KernelProgram, IrError> {
    let mut name: Option<String> = None;
    let mut params = Vec::new();
    // (block id, header line, inputs, nodes with their lines)
    let mut blocks: Vec<(BlockId, usize, Vec<String>, Vec<(NodeDraft, usize)>)> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let code = raw.split('#').next().unwrap_or("");
        let mut offset = 0;
        for stmt in code.split(';') {
            let col0 = offset;
            offset += stmt.chars().count() + 1;
            let toks = lex(stmt, line, col0)?;
            if toks.is_empty() {
                continue;
            }
            let mut cur = Cursor {
                toks: &toks,
                pos: 0,
                line,
                end_col: col0 + stmt.chars().count() + 1,
            };
            match &toks[0].tok {
                Tok::Ident(k) if k == "kernel" => {
                    if name.is_some() {
                        return Err(cur.err("duplicate kernel header"));
                    }
                    cur.pos = 1;
                    name = Some(cur.ident("a kernel name")?);
                    cur.punct('(')?;
                    if !cur.eat(')') {
                        loop {
                            let pname = cur.ident("a parameter name")?;
                            cur.punct(':')?;
                            let kcol = cur.col();
                            let kind = cur.ident("a parameter kind")?;
                            let kind = parse_param_kind(&kind).ok_or(IrError::Syntax {
                                line,
                                col: kcol,
                                msg: format!("unknown parameter kind `{}` (int, float, ptr)", kind),
                            })?;
                            params.push(Param { name: pname, kind });
                            if cur.eat(')') {
                                break;
                            }
                            cur.punct(',')?;
                        }
                    }
                    cur.expect_end()?;
                }
                Tok::Ident(k) if k == "block" => {
                    if name.is_none() {
                        return Err(cur.err("block before kernel header"));
                    }
                    cur.pos = 1;
                    let id = cur.block_id()?;
                    let inputs = cur.name_list()?;
                    cur.punct(':')?;
                    cur.expect_end()?;
                    if blocks.iter().any(|b| b.0 == id) {
                        return Err(IrError::DuplicateBlock { line, block: id });
                    }
                    blocks.push((id, line, inputs, Vec::new()));
                }
                _ => {
                    let Some(block) = blocks.last_mut() else {
                        return Err(cur.err("instruction outside of a block"));
                    };
                    let node = parse_statement(&mut cur)?;
                    block.3.push((node, line));
                }
            }
        }
    }

    let name = name.ok_or(IrError::Syntax {
        line: 1,
        col: 1,
        msg: "missing `kernel` header".into(),
    })?;
    blocks.sort_by_key(|b| b.0);
    for (pos, b) in blocks.iter().enumerate() {
        if b.0 as usize != pos {
            return Err(IrError::Invalid {
                line: b.1,
                msg: format!("block IDs must be dense 0..n-1; block {} is missing", pos),
            });
        }
    }

    let mut src = SourceMap::default();
    let mut next = 0;
    let mut out_blocks = Vec::with_capacity(blocks.len());
    for (id, line, inputs, nodes) in blocks {
        src.block_lines.push(line);
        let nodes = nodes
            .into_iter()
            .map(|(d, l)| {
                src.node_lines.push(l);
                let n = Node {
                    id: next,
                    op: d.op,
                    operands: d.operands,
                    result: d.result,
                };
                next += 1;
                n
            })
            .collect();
        out_blocks.push(BasicBlock { id, inputs, nodes });
    }
    let program = KernelProgram {
        name,
        params,
        blocks: out_blocks,
        entry: 0,
    };
    program.validate_with(&src)?;
    Ok(program)
}

#[cfg(test)]
mod tests {
    use super::*;

    const LOOP: &str = "
kernel count(n: int)
block 0():
  zero = const 0
  br 1(zero)
block 1(i):
  one = const 1
  next = iadd i one
  more = cmp.lt next n
  cbr more 1(next) 2()
block 2():
  ret
";

    #[test]
    fn one_block_kernel() {
        let p = parse_kernel("kernel k(a: int, b: int)\nblock 0():\n v = iadd a b; return v").unwrap();
        assert_eq!(p.blocks.len(), 1);
        assert_eq!(p.num_nodes(), 2);
        assert_eq!(p.blocks[0].terminator().opclass(), OpClass::Return);
    }

    #[test]
    fn loop_kernel_has_two_way_branch() {
        let p = parse_kernel(LOOP).unwrap();
        assert_eq!(p.blocks.len(), 3);
        let term = p.blocks[1].terminator();
        assert_eq!(term.opclass(), OpClass::CondBranch);
        assert_eq!(term.op.edges().len(), 2);
    }

    #[test]
    fn missing_terminator_is_reported() {
        let text = "kernel k(a: int)\nblock 0():\n br 1()\nblock 1():\n x = mov a\n";
        let err = parse_kernel(text).unwrap_err();
        assert_eq!(err.to_string(), "missing terminator, block 1");
    }

    #[test]
    fn undefined_value_has_line() {
        let err = parse_kernel("kernel k()\nblock 0():\n  v = iadd a b\n  ret\n").unwrap_err();
        assert!(matches!(err, IrError::Undefined { line: 3, ref name } if name == "a"));
    }

    #[test]
    fn duplicate_block_rejected() {
        let err = parse_kernel("kernel k()\nblock 0():\n ret\nblock 0():\n ret\n").unwrap_err();
        assert!(matches!(err, IrError::DuplicateBlock { line: 4, block: 0 }));
    }

    #[test]
    fn syntax_error_has_column() {
        let err = parse_kernel("kernel k()\nblock 0():\n  v = frob\n  ret\n").unwrap_err();
        match err {
            IrError::Syntax { line, col, .. } => {
                assert_eq!(line, 3);
                assert_eq!(col, 7);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn literals() {
        assert_eq!(parse_literal("-3"), Some(Literal::Int(-3)));
        assert_eq!(parse_literal("0x10"), Some(Literal::Int(16)));
        assert_eq!(parse_literal("1.5"), Some(Literal::Float(1.5f64.to_bits())));
        assert_eq!(parse_literal("1e-3"), Some(Literal::Float(1e-3f64.to_bits())));
        assert_eq!(parse_literal("abc"), None);
    }

    #[test]
    fn print_then_parse_is_identity() {
        let p = parse_kernel(LOOP).unwrap();
        let q = parse_kernel(&p.to_string()).unwrap();
        assert_eq!(p, q);
    }
}
