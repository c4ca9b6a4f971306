//! Seeded generator of small valid C programs and single-line mutations of
//! them, used to build benchmark corpora with known error-repair classes.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::ProgramPair;

/// A single-token edit that turns a valid line into an erroneous one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mutation {
    DropSemicolon,
    ForCommaForSemicolon,
    ForDropSemicolon,
    DropCloseParen,
    DropOpenParen,
    DropCloseBracket,
    ExtraCloseParen,
    UndeclaredInt,
    UndeclaredArray,
    UndeclaredChar,
    UndeclaredFloat,
    UndeclaredDouble,
    CharLiteralUnquoted,
    MisspelledFunction,
    MisspelledPrintf,
    EqualityToAssignment,
    DeclAssignToEquality,
    MisspelledIntKeyword,
    MisspelledDoubleKeyword,
    ExtraClosingBrace,
    MissingClosingBrace,
}

impl Mutation {
    pub const ALL: [Mutation; 21] = [
        Mutation::DropSemicolon,
        Mutation::ForCommaForSemicolon,
        Mutation::ForDropSemicolon,
        Mutation::DropCloseParen,
        Mutation::DropOpenParen,
        Mutation::DropCloseBracket,
        Mutation::ExtraCloseParen,
        Mutation::UndeclaredInt,
        Mutation::UndeclaredArray,
        Mutation::UndeclaredChar,
        Mutation::UndeclaredFloat,
        Mutation::UndeclaredDouble,
        Mutation::CharLiteralUnquoted,
        Mutation::MisspelledFunction,
        Mutation::MisspelledPrintf,
        Mutation::EqualityToAssignment,
        Mutation::DeclAssignToEquality,
        Mutation::MisspelledIntKeyword,
        Mutation::MisspelledDoubleKeyword,
        Mutation::ExtraClosingBrace,
        Mutation::MissingClosingBrace,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mutation::DropSemicolon => "drop-semicolon",
            Mutation::ForCommaForSemicolon => "for-comma-for-semicolon",
            Mutation::ForDropSemicolon => "for-drop-semicolon",
            Mutation::DropCloseParen => "drop-close-paren",
            Mutation::DropOpenParen => "drop-open-paren",
            Mutation::DropCloseBracket => "drop-close-bracket",
            Mutation::ExtraCloseParen => "extra-close-paren",
            Mutation::UndeclaredInt => "undeclared-int",
            Mutation::UndeclaredArray => "undeclared-array",
            Mutation::UndeclaredChar => "undeclared-char",
            Mutation::UndeclaredFloat => "undeclared-float",
            Mutation::UndeclaredDouble => "undeclared-double",
            Mutation::CharLiteralUnquoted => "char-literal-unquoted",
            Mutation::MisspelledFunction => "misspelled-function",
            Mutation::MisspelledPrintf => "misspelled-printf",
            Mutation::EqualityToAssignment => "equality-to-assignment",
            Mutation::DeclAssignToEquality => "decl-assign-to-equality",
            Mutation::MisspelledIntKeyword => "misspelled-int-keyword",
            Mutation::MisspelledDoubleKeyword => "misspelled-double-keyword",
            Mutation::ExtraClosingBrace => "extra-closing-brace",
            Mutation::MissingClosingBrace => "missing-closing-brace",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub pairs: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { pairs: 1500, seed: 7 }
    }
}

const INT_NAMES: &[&str] = &[
    "n", "i", "j", "k", "sum", "count", "total", "len", "num", "cnt", "idx", "res", "acc", "m",
    "limit", "steps", "score", "prod", "size", "value",
];
const ARRAY_NAMES: &[&str] = &["arr", "nums", "data", "vals", "list", "buf", "marks", "items"];
const CHAR_NAMES: &[&str] = &["ch", "c", "grade", "letter", "op", "sym"];
const FLOAT_NAMES: &[&str] = &["ratio", "rate", "avg", "mean", "f", "scale"];
const DOUBLE_NAMES: &[&str] = &["d", "area", "amount", "result", "weight", "volume"];
const FUNC_NAMES: &[&str] = &["square", "twice", "cube", "triple", "negate", "half"];
/// Undeclared stand-ins; far from every declared name so compilers do not
/// attach a "did you mean" hint.
const UNDECLARED: &[&str] = &["xyz", "qwv", "zzt", "bxq", "kjw", "vqz", "wxk", "zqp"];
const CHAR_LETTERS: &[char] = &['y', 'z', 'w', 'q', 'x', 'v'];
const PRINTF_TYPOS: &[&str] = &["prinf", "pritnf", "printff", "prntf"];
const INT_TYPOS: &[&str] = &["itn", "nit", "Int", "innt"];
const DOUBLE_TYPOS: &[&str] = &["doubel", "duoble", "Double", "dobule"];

/// Role of a generated line; mutations target roles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    FnReturn,
    DeclInts,
    DeclArray,
    DeclChar,
    DeclFloat,
    DeclDouble,
    Scanf,
    ForHeader,
    ArrayStore,
    SumUpdate,
    LiteralUpdate,
    IfParity,
    CharAssign,
    FloatUpdate,
    DoubleUpdate,
    CallAssign,
    PrintfInt,
    WhileHeader,
    Decrement,
    IfBreak,
    Break,
    PrintfReals,
    MainReturn,
    MainClose,
    Plain,
}

struct Names {
    ints: Vec<&'static str>,
    arr: &'static str,
    ch: &'static str,
    flt: &'static str,
    dbl: &'static str,
    func: &'static str,
    param: &'static str,
}

struct Program {
    lines: Vec<(String, Role)>,
    names: Names,
}

impl Program {
    fn source(&self) -> String {
        let mut out: String = self.lines.iter().map(|(l, _)| format!("{l}\n")).collect();
        out.shrink_to_fit();
        out
    }
}

fn generate_program(rng: &mut ChaCha8Rng) -> Program {
    let mut pool: Vec<&'static str> = INT_NAMES.to_vec();
    pool.shuffle(rng);
    let ints: Vec<&'static str> = pool[..5].to_vec();
    let names = Names {
        ints,
        arr: ARRAY_NAMES.choose(rng).unwrap(),
        ch: CHAR_NAMES.choose(rng).unwrap(),
        flt: FLOAT_NAMES.choose(rng).unwrap(),
        dbl: DOUBLE_NAMES.choose(rng).unwrap(),
        func: FUNC_NAMES.choose(rng).unwrap(),
        param: ["a", "b", "e", "u"].choose(rng).unwrap(),
    };
    let (n, i, s, k, lim) = (names.ints[0], names.ints[1], names.ints[2], names.ints[3], names.ints[4]);
    let (arr, ch, flt, dbl, func, p) = (names.arr, names.ch, names.flt, names.dbl, names.func, names.param);
    let size = rng.random_range(5..=40);
    let c0 = CHAR_LETTERS.choose(rng).unwrap();
    let c1 = CHAR_LETTERS.choose(rng).unwrap();
    let f0 = format!("{}.{}f", rng.random_range(0..10), rng.random_range(0..10));
    let d0 = format!("{}.{}", rng.random_range(0..100), rng.random_range(0..10));
    let fmul = format!("{}.{}", rng.random_range(1..5), rng.random_range(0..10));
    let ddiv = format!("{}.{}", rng.random_range(1..9), rng.random_range(0..10));
    let op = ["+", "-"].choose(rng).unwrap();
    let mul = ["*", "+"].choose(rng).unwrap();
    let body_fn = match func {
        "square" => format!("{p} * {p}"),
        "cube" => format!("{p} * {p} * {p}"),
        "twice" => format!("{p} + {p}"),
        "triple" => format!("3 * {p}"),
        "negate" => format!("-{p}"),
        _ => format!("{p} / 2"),
    };
    let modulus = rng.random_range(2..6);
    let lit = rng.random_range(1..20);
    let k0 = rng.random_range(0..10);

    let mut lines: Vec<(String, Role)> = vec![
        ("#include <stdio.h>".into(), Role::Plain),
        (String::new(), Role::Plain),
        (format!("int {func}(int {p}) {{"), Role::Plain),
        (format!("    return {body_fn};"), Role::FnReturn),
        ("}".into(), Role::Plain),
        (String::new(), Role::Plain),
        ("int main() {".into(), Role::Plain),
    ];
    let mut decls = vec![
        (format!("    int {n}, {i}, {s} = 0, {k} = {k0}, {lim} = {lit};"), Role::DeclInts),
        (format!("    int {arr}[{size}];"), Role::DeclArray),
        (format!("    char {ch} = '{c0}';"), Role::DeclChar),
        (format!("    float {flt} = {f0};"), Role::DeclFloat),
        (format!("    double {dbl} = {d0};"), Role::DeclDouble),
    ];
    decls[1..].shuffle(rng);
    lines.extend(decls);
    lines.push((format!("    scanf(\"%d\", &{n});"), Role::Scanf));
    lines.push((format!("    for ({i} = 0; {i} < {n}; {i}++) {{"), Role::ForHeader));
    lines.push((format!("        {arr}[{i}] = {i} {mul} {k};"), Role::ArrayStore));
    lines.push((format!("        {s} = {s} {op} {arr}[{i}];"), Role::SumUpdate));
    lines.push(("    }".into(), Role::Plain));
    let mut middle: Vec<Vec<(String, Role)>> = vec![
        vec![(format!("    {s} = {s} + {lit};"), Role::LiteralUpdate)],
        vec![
            (format!("    if ({s} % {modulus} == 0) {{"), Role::IfParity),
            (format!("        {ch} = '{c1}';"), Role::CharAssign),
            ("    }".into(), Role::Plain),
        ],
        vec![(format!("    {flt} = {flt} * {fmul};"), Role::FloatUpdate)],
        vec![(format!("    {dbl} = {dbl} / {ddiv};"), Role::DoubleUpdate)],
        vec![(format!("    {s} = {func}({s});"), Role::CallAssign)],
    ];
    middle.shuffle(rng);
    lines.extend(middle.into_iter().flatten());
    lines.push((format!("    printf(\"%d %c\\n\", {s}, {ch});"), Role::PrintfInt));
    lines.push((format!("    while ({n} > 0) {{"), Role::WhileHeader));
    lines.push((format!("        {n} = {n} - 1;"), Role::Decrement));
    lines.push((format!("        if ({n} == {lim})"), Role::IfBreak));
    lines.push(("            break;".into(), Role::Break));
    lines.push(("    }".into(), Role::Plain));
    lines.push((format!("    printf(\"%f %f\\n\", {flt}, {dbl});"), Role::PrintfReals));
    lines.push(("    return 0;".into(), Role::MainReturn));
    lines.push(("}".into(), Role::MainClose));
    Program { lines, names }
}

fn targets(m: Mutation) -> &'static [Role] {
    use Role::*;
    match m {
        Mutation::DropSemicolon => &[
            FnReturn, DeclInts, DeclArray, DeclFloat, DeclDouble, Scanf, ArrayStore, SumUpdate,
            LiteralUpdate, CharAssign, FloatUpdate, DoubleUpdate, CallAssign, PrintfInt,
            Decrement, Break, PrintfReals, MainReturn,
        ],
        Mutation::ForCommaForSemicolon | Mutation::ForDropSemicolon => &[ForHeader],
        Mutation::DropCloseParen => &[IfParity, WhileHeader, PrintfInt, Scanf, PrintfReals],
        Mutation::DropOpenParen => &[IfParity, WhileHeader],
        Mutation::DropCloseBracket => &[ArrayStore],
        Mutation::ExtraCloseParen => &[SumUpdate, LiteralUpdate, Decrement],
        Mutation::UndeclaredInt => &[SumUpdate, LiteralUpdate, Decrement, ForHeader],
        Mutation::UndeclaredArray => &[ArrayStore, SumUpdate],
        Mutation::UndeclaredChar => &[CharAssign],
        Mutation::UndeclaredFloat => &[FloatUpdate],
        Mutation::UndeclaredDouble => &[DoubleUpdate],
        Mutation::CharLiteralUnquoted => &[CharAssign, DeclChar],
        Mutation::MisspelledFunction => &[CallAssign],
        Mutation::MisspelledPrintf => &[PrintfInt, PrintfReals],
        Mutation::EqualityToAssignment => &[IfParity],
        Mutation::DeclAssignToEquality => &[DeclFloat, DeclDouble, DeclChar],
        Mutation::MisspelledIntKeyword => &[DeclInts, DeclArray],
        Mutation::MisspelledDoubleKeyword => &[DeclDouble],
        Mutation::ExtraClosingBrace | Mutation::MissingClosingBrace => &[MainClose],
    }
}

/// Replaces the `nth` whole-word occurrence of `word` in `line`.
fn replace_word(line: &str, word: &str, nth: usize, with: &str) -> Option<String> {
    let is_ident = |c: char| c.is_ascii_alphanumeric() || c == '_';
    let mut seen = 0;
    let mut from = 0;
    while let Some(pos) = line[from..].find(word).map(|p| p + from) {
        let before = line[..pos].chars().next_back();
        let after = line[pos + word.len()..].chars().next();
        if !before.is_some_and(is_ident) && !after.is_some_and(is_ident) {
            if seen == nth {
                return Some(format!("{}{with}{}", &line[..pos], &line[pos + word.len()..]));
            }
            seen += 1;
        }
        from = pos + word.len();
    }
    None
}

fn remove_last(line: &str, pat: char) -> Option<String> {
    let pos = line.rfind(pat)?;
    Some(format!("{}{}", &line[..pos], &line[pos + pat.len_utf8()..]))
}

fn mutate(m: Mutation, line: &str, role: Role, names: &Names, rng: &mut ChaCha8Rng) -> Option<String> {
    let undeclared = *UNDECLARED.choose(rng).unwrap();
    let (s, n) = (names.ints[2], names.ints[0]);
    match m {
        Mutation::DropSemicolon => line.ends_with(';').then(|| line[..line.len() - 1].to_string()),
        Mutation::ForCommaForSemicolon => {
            let pos = if rng.random_bool(0.5) { line.find(';')? } else { line.rfind(';')? };
            Some(format!("{},{}", &line[..pos], &line[pos + 1..]))
        }
        Mutation::ForDropSemicolon => {
            let pos = line.find(';')?;
            Some(format!("{}{}", &line[..pos], &line[pos + 1..]))
        }
        Mutation::DropCloseParen => match role {
            Role::IfParity | Role::WhileHeader => remove_last(line, ')'),
            _ => line.rfind(");").map(|p| format!("{};", &line[..p])),
        },
        Mutation::DropOpenParen => {
            let pos = line.find('(')?;
            Some(format!("{}{}", &line[..pos], &line[pos + 1..]))
        }
        Mutation::DropCloseBracket => {
            let pos = line.find(']')?;
            Some(format!("{}{}", &line[..pos], &line[pos + 1..]))
        }
        Mutation::ExtraCloseParen => line.strip_suffix(';').map(|l| format!("{l});")),
        Mutation::UndeclaredInt => match role {
            Role::SumUpdate | Role::LiteralUpdate => replace_word(line, s, 1, undeclared),
            Role::Decrement => replace_word(line, n, 1, undeclared),
            _ => replace_word(line, n, 0, undeclared),
        },
        Mutation::UndeclaredArray => replace_word(line, names.arr, 0, undeclared),
        Mutation::UndeclaredChar => replace_word(line, names.ch, 0, undeclared),
        Mutation::UndeclaredFloat => replace_word(line, names.flt, 1, undeclared),
        Mutation::UndeclaredDouble => replace_word(line, names.dbl, 1, undeclared),
        Mutation::CharLiteralUnquoted => {
            let start = line.find('\'')?;
            let end = line[start + 1..].find('\'')? + start + 1;
            Some(format!("{}{}{}", &line[..start], &line[start + 1..end], &line[end + 1..]))
        }
        Mutation::MisspelledFunction => {
            let f = names.func;
            let typo = match rng.random_range(0..3) {
                0 => format!("{}{}", &f[..f.len() - 1], f[f.len() - 1..].repeat(2)),
                1 => f[..f.len() - 1].to_string(),
                _ => format!("{}_", f),
            };
            replace_word(line, f, 0, &typo)
        }
        Mutation::MisspelledPrintf => replace_word(line, "printf", 0, PRINTF_TYPOS.choose(rng).unwrap()),
        Mutation::EqualityToAssignment => line.contains("==").then(|| line.replacen("==", "=", 1)),
        Mutation::DeclAssignToEquality => line.contains(" = ").then(|| line.replacen(" = ", " == ", 1)),
        Mutation::MisspelledIntKeyword => replace_word(line, "int", 0, INT_TYPOS.choose(rng).unwrap()),
        Mutation::MisspelledDoubleKeyword => {
            replace_word(line, "double", 0, DOUBLE_TYPOS.choose(rng).unwrap())
        }
        Mutation::ExtraClosingBrace => Some("}}".into()),
        Mutation::MissingClosingBrace => Some(String::new()),
    }
}

/// Generates `config.pairs` (buggy, repaired) pairs cycling through every
/// [`Mutation`]. Each pair's `assignment_id` names its mutation. The same
/// config always yields the same corpus.
pub fn generate_corpus(config: &SynthConfig) -> Vec<ProgramPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = Vec::with_capacity(config.pairs);
    while out.len() < config.pairs {
        let m = Mutation::ALL[out.len() % Mutation::ALL.len()];
        let program = generate_program(&mut rng);
        let sites: Vec<usize> = program
            .lines
            .iter()
            .enumerate()
            .filter(|(_, (_, role))| targets(m).contains(role))
            .map(|(i, _)| i)
            .collect();
        let Some(&site) = sites.choose(&mut rng) else {
            continue;
        };
        let (line, role) = &program.lines[site];
        let Some(bad) = mutate(m, line, *role, &program.names, &mut rng) else {
            continue;
        };
        if bad == *line {
            continue;
        }
        let repaired = program.source();
        let mut buggy_lines = program.lines.iter().map(|(l, _)| l.clone()).collect::<Vec<_>>();
        buggy_lines[site] = bad;
        let buggy: String = buggy_lines.iter().map(|l| format!("{l}\n")).collect();
        out.push(ProgramPair {
            pair_id: format!("synth-{:05}", out.len()),
            buggy_source: buggy,
            repaired_source: repaired,
            assignment_id: Some(m.name().to_string()),
        });
    }
    out
}

/// A valid program from the same generator.
pub fn clean_program(seed: u64) -> String {
    generate_program(&mut ChaCha8Rng::seed_from_u64(seed)).source()
}
