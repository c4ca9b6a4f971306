//! Line-level C lexing and type-tag abstraction.
//!
//! Identifiers are replaced by the type inferred from a declaration scan of
//! the whole program, literals by `LITERAL_*` tags. Anything the scanner
//! cannot type becomes `INVALID`.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenKind {
    Keyword,
    Identifier,
    Operator,
    Punctuation,
    IntLiteral,
    FloatLiteral,
    CharLiteral,
    StringLiteral,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
}

impl Token {
    fn new(kind: TokenKind, text: impl Into<String>) -> Self {
        Self {
            kind,
            text: text.into(),
        }
    }
}

const C_KEYWORDS: &[&str] = &[
    "auto", "break", "case", "char", "const", "continue", "default", "do", "double", "else",
    "enum", "extern", "float", "for", "goto", "if", "inline", "int", "long", "register",
    "restrict", "return", "short", "signed", "sizeof", "static", "struct", "switch", "typedef",
    "union", "unsigned", "void", "volatile", "while", "_Bool", "_Complex", "_Imaginary",
];

pub const INVALID: &str = "INVALID";
pub const LITERAL_INT: &str = "LITERAL_INT";
pub const LITERAL_FLOAT: &str = "LITERAL_FLOAT";
pub const LITERAL_CHAR: &str = "LITERAL_CHAR";
pub const LITERAL_STR: &str = "LITERAL_STR";

/// Abstraction tags. They lex as keywords so abstracting an already
/// abstract line is a no-op.
pub const TAGS: &[&str] = &[
    "INT", "FLOAT", "DOUBLE", "CHAR", "LONG", "ARRAY", "POINTER", "FUNC", INVALID, LITERAL_INT,
    LITERAL_FLOAT, LITERAL_CHAR, LITERAL_STR,
];

/// Library names kept verbatim in abstract lines.
pub const STDLIB_NAMES: &[&str] = &[
    "printf", "scanf", "main", "getchar", "putchar", "strlen", "strcpy", "strcmp", "sqrt", "pow",
    "abs", "malloc", "free",
];

pub fn is_keyword(word: &str) -> bool {
    C_KEYWORDS.contains(&word) || TAGS.contains(&word)
}

pub fn is_stdlib(word: &str) -> bool {
    STDLIB_NAMES.contains(&word)
}

const OPERATORS: &[&str] = &[
    "<<=", ">>=", "...", "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "+=",
    "-=", "*=", "/=", "%=", "&=", "^=", "|=", "##", "+", "-", "*", "/", "%", "=", "<", ">", "!",
    "&", "|", "^", "~", "?", ":", ".", "#",
];

/// Maximal-munch C lexer. Comments and whitespace are dropped; any byte that
/// starts no token becomes a one-character punctuation token.
pub fn tokenize(src: &str) -> Vec<Token> {
    let chars: Vec<char> = src.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    let n = chars.len();

    while i < n {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '/' && i + 1 < n && chars[i + 1] == '/' {
            while i < n && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c == '/' && i + 1 < n && chars[i + 1] == '*' {
            i += 2;
            while i < n && !(chars[i] == '*' && i + 1 < n && chars[i + 1] == '/') {
                i += 1;
            }
            i = (i + 2).min(n);
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < n && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            let kind = if is_keyword(&word) {
                TokenKind::Keyword
            } else {
                TokenKind::Identifier
            };
            tokens.push(Token::new(kind, word));
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && i + 1 < n && chars[i + 1].is_ascii_digit()) {
            let (end, kind) = lex_number(&chars, i);
            tokens.push(Token::new(kind, chars[i..end].iter().collect::<String>()));
            i = end;
            continue;
        }
        if c == '\'' {
            if let Some(end) = lex_char_literal(&chars, i) {
                tokens.push(Token::new(
                    TokenKind::CharLiteral,
                    chars[i..end].iter().collect::<String>(),
                ));
                i = end;
            } else {
                tokens.push(Token::new(TokenKind::Punctuation, "'"));
                i += 1;
            }
            continue;
        }
        if c == '"' {
            if let Some(end) = lex_string_literal(&chars, i) {
                tokens.push(Token::new(
                    TokenKind::StringLiteral,
                    chars[i..end].iter().collect::<String>(),
                ));
                i = end;
            } else {
                tokens.push(Token::new(TokenKind::Punctuation, "\""));
                i += 1;
            }
            continue;
        }
        if let Some(op) = OPERATORS
            .iter()
            .find(|op| op.chars().enumerate().all(|(k, oc)| chars.get(i + k) == Some(&oc)))
        {
            tokens.push(Token::new(TokenKind::Operator, *op));
            i += op.chars().count();
            continue;
        }
        // ; , ( ) [ ] { } or an unknown character
        tokens.push(Token::new(TokenKind::Punctuation, c.to_string()));
        i += 1;
    }
    tokens
}

fn lex_number(chars: &[char], start: usize) -> (usize, TokenKind) {
    let n = chars.len();
    let mut i = start;
    let hex = chars[i] == '0' && matches!(chars.get(i + 1), Some('x' | 'X'));
    let mut float = false;
    if hex {
        i += 2;
    }
    while i < n {
        let c = chars[i];
        let exponent = if hex {
            matches!(c, 'p' | 'P')
        } else {
            matches!(c, 'e' | 'E')
        };
        if exponent && matches!(chars.get(i + 1), Some('+' | '-')) {
            float = true;
            i += 2;
        } else if c == '.' {
            float = true;
            i += 1;
        } else if c.is_ascii_alphanumeric() || c == '_' {
            if exponent {
                float = true;
            }
            i += 1;
        } else {
            break;
        }
    }
    if !hex && matches!(chars[i - 1], 'f' | 'F') {
        float = true;
    }
    let kind = if float {
        TokenKind::FloatLiteral
    } else {
        TokenKind::IntLiteral
    };
    (i, kind)
}

/// `'x'` or `'\n'` style literal; returns the end index or None when the
/// quote dangles.
fn lex_char_literal(chars: &[char], start: usize) -> Option<usize> {
    let mut i = start + 1;
    match chars.get(i)? {
        '\\' => {
            i += 1;
            chars.get(i)?;
            i += 1;
            // octal / hex escapes
            while i < chars.len() && chars[i] != '\'' && chars[i].is_ascii_hexdigit() && i - start < 6 {
                i += 1;
            }
        }
        '\'' | '\n' => return None,
        _ => i += 1,
    }
    (chars.get(i) == Some(&'\'')).then_some(i + 1)
}

fn lex_string_literal(chars: &[char], start: usize) -> Option<usize> {
    let mut i = start + 1;
    while i < chars.len() {
        match chars[i] {
            '\\' => i += 2,
            '"' => return Some(i + 1),
            '\n' => return None,
            _ => i += 1,
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TypeTag {
    Int,
    Float,
    Double,
    Char,
    Long,
    Array,
    Pointer,
    Func,
    Stdlib,
}

impl TypeTag {
    pub fn as_str(self) -> &'static str {
        match self {
            TypeTag::Int => "INT",
            TypeTag::Float => "FLOAT",
            TypeTag::Double => "DOUBLE",
            TypeTag::Char => "CHAR",
            TypeTag::Long => "LONG",
            TypeTag::Array => "ARRAY",
            TypeTag::Pointer => "POINTER",
            TypeTag::Func => "FUNC",
            TypeTag::Stdlib => "STDLIB",
        }
    }
}

impl fmt::Display for TypeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SymbolTable {
    types: HashMap<String, TypeTag>,
}

impl SymbolTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tag: TypeTag) {
        let name = name.into();
        if !is_stdlib(&name) {
            self.types.insert(name, tag);
        }
    }

    pub fn get(&self, name: &str) -> Option<TypeTag> {
        if is_stdlib(name) {
            return Some(TypeTag::Stdlib);
        }
        self.types.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }
}

impl<S: Into<String>> FromIterator<(S, TypeTag)> for SymbolTable {
    fn from_iter<I: IntoIterator<Item = (S, TypeTag)>>(iter: I) -> Self {
        let mut table = SymbolTable::new();
        for (name, tag) in iter {
            table.insert(name, tag);
        }
        table
    }
}

const SPECIFIERS: &[&str] = &[
    "int", "char", "float", "double", "long", "short", "signed", "unsigned", "void", "const",
    "static", "extern", "volatile", "register", "auto", "inline", "restrict", "_Bool",
];

fn is_specifier(tok: &Token) -> bool {
    tok.kind == TokenKind::Keyword && SPECIFIERS.contains(&tok.text.as_str())
}

/// Scans declarations (variables, arrays, pointers, function definitions,
/// prototypes and parameters). Later declarations overwrite earlier ones.
pub fn build_symbol_table(source: &str) -> SymbolTable {
    let code: Vec<&str> = source
        .lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .collect();
    let tokens = tokenize(&code.join("\n"));
    let mut table = SymbolTable::new();
    for i in 0..tokens.len() {
        if !is_specifier(&tokens[i]) || (i > 0 && is_specifier(&tokens[i - 1])) {
            continue;
        }
        for (name, tag) in scan_declaration(&tokens, i) {
            table.insert(name, tag);
        }
    }
    table
}

fn base_tag(specs: &[&str]) -> Option<TypeTag> {
    let has = |s: &str| specs.contains(&s);
    if has("double") {
        Some(TypeTag::Double)
    } else if has("float") {
        Some(TypeTag::Float)
    } else if has("char") {
        Some(TypeTag::Char)
    } else if has("long") {
        Some(TypeTag::Long)
    } else if has("int") || has("short") || has("signed") || has("unsigned") || has("_Bool") {
        Some(TypeTag::Int)
    } else {
        None
    }
}

/// Parses `specifiers declarator (, declarator)*` starting at `start`.
fn scan_declaration(tokens: &[Token], start: usize) -> Vec<(String, TypeTag)> {
    let mut i = start;
    let mut specs = Vec::new();
    while i < tokens.len() && is_specifier(&tokens[i]) {
        specs.push(tokens[i].text.as_str());
        i += 1;
    }
    let base = base_tag(&specs);
    let is_void = specs.contains(&"void");

    let mut found = Vec::new();
    loop {
        let mut stars = 0;
        while tokens.get(i).is_some_and(|t| t.text == "*" || t.text == "const") {
            if tokens[i].text == "*" {
                stars += 1;
            }
            i += 1;
        }
        let Some(name_tok) = tokens.get(i).filter(|t| t.kind == TokenKind::Identifier) else {
            break;
        };
        let name = name_tok.text.clone();
        i += 1;

        let mut array = false;
        let mut func = false;
        while let Some(t) = tokens.get(i) {
            match t.text.as_str() {
                "[" => {
                    array = true;
                    i = skip_balanced(tokens, i, "[", "]");
                }
                "(" if !array => {
                    func = true;
                    i = skip_balanced(tokens, i, "(", ")");
                }
                _ => break,
            }
        }

        let tag = if func {
            Some(TypeTag::Func)
        } else if array {
            Some(TypeTag::Array)
        } else if stars > 0 {
            Some(TypeTag::Pointer)
        } else if is_void {
            None
        } else {
            base
        };
        if let Some(tag) = tag {
            found.push((name, tag));
        }

        if func && tokens.get(i).is_some_and(|t| t.text == "{") {
            break;
        }
        if tokens.get(i).is_some_and(|t| t.text == "=") {
            i = skip_initializer(tokens, i + 1);
        }
        match tokens.get(i).map(|t| t.text.as_str()) {
            Some(",") => i += 1,
            _ => break,
        }
    }
    found
}

/// Index just past the bracket group opening at `i`.
fn skip_balanced(tokens: &[Token], mut i: usize, open: &str, close: &str) -> usize {
    let mut depth = 0usize;
    while let Some(t) = tokens.get(i) {
        if t.text == open {
            depth += 1;
        } else if t.text == close {
            depth -= 1;
            if depth == 0 {
                return i + 1;
            }
        } else if t.text == ";" {
            return i;
        }
        i += 1;
    }
    i
}

/// Index of the `,` or `;` ending an initializer at nesting depth zero.
fn skip_initializer(tokens: &[Token], mut i: usize) -> usize {
    let mut depth = 0i32;
    while let Some(t) = tokens.get(i) {
        match t.text.as_str() {
            "(" | "[" | "{" => depth += 1,
            ")" | "]" | "}" => {
                depth -= 1;
                if depth < 0 {
                    return i;
                }
            }
            "," | ";" if depth == 0 => return i,
            _ => {}
        }
        i += 1;
    }
    i
}

/// A source line with program-specific tokens replaced by tags.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AbstractLine {
    pub tokens: Vec<String>,
}

impl AbstractLine {
    pub fn new<S: Into<String>>(tokens: impl IntoIterator<Item = S>) -> Self {
        Self {
            tokens: tokens.into_iter().map(Into::into).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Tokens joined by single spaces. Two adjacent dangling `'` tokens get
    /// a double space so the rendering does not re-lex as `' '`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, tok) in self.tokens.iter().enumerate() {
            if i > 0 {
                out.push(' ');
                if tok == "'" && self.tokens[i - 1] == "'" {
                    out.push(' ');
                }
            }
            out.push_str(tok);
        }
        out
    }
}

impl fmt::Display for AbstractLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

pub fn abstract_token(tok: &Token, symtab: &SymbolTable) -> String {
    match tok.kind {
        TokenKind::Identifier => match symtab.get(&tok.text) {
            Some(TypeTag::Stdlib) => tok.text.clone(),
            Some(tag) => tag.as_str().to_string(),
            None => INVALID.to_string(),
        },
        TokenKind::IntLiteral => LITERAL_INT.to_string(),
        TokenKind::FloatLiteral => LITERAL_FLOAT.to_string(),
        TokenKind::CharLiteral => LITERAL_CHAR.to_string(),
        TokenKind::StringLiteral => LITERAL_STR.to_string(),
        TokenKind::Keyword | TokenKind::Operator | TokenKind::Punctuation => tok.text.clone(),
    }
}

pub fn abstract_line(line: &str, symtab: &SymbolTable) -> AbstractLine {
    AbstractLine {
        tokens: tokenize(line).iter().map(|t| abstract_token(t, symtab)).collect(),
    }
}
