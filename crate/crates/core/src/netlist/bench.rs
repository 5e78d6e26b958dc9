use std::fmt::Write as _;

use super::{GateSpec, GateType, Netlist, NetlistBuilder, NetlistError};

/// Name prefix that marks a key input in bench files produced by locking tools.
pub const DEFAULT_KEY_PREFIX: &str = "keyinput";

#[derive(Debug, Clone)]
pub struct ParseOptions {
    pub key_prefix: String,
    pub name: String,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions { key_prefix: DEFAULT_KEY_PREFIX.to_string(), name: "netlist".to_string() }
    }
}

pub fn parse_bench(text: &str) -> Result<Netlist, NetlistError> {
    parse_bench_with(text, &ParseOptions::default())
}

pub fn parse_bench_with(text: &str, opts: &ParseOptions) -> Result<Netlist, NetlistError> {
    let mut b = NetlistBuilder::new(opts.name.clone());
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let syntax = |message: &str| NetlistError::Syntax { line: line_no, message: message.to_string() };

        if let Some(eq) = line.find('=') {
            let lhs = line[..eq].trim();
            let rhs = line[eq + 1..].trim();
            if !is_name(lhs) {
                return Err(syntax(&format!("invalid net name `{lhs}`")));
            }
            let (kw, args) = split_call(rhs).ok_or_else(|| syntax("expected GATE(a, b, ...)"))?;
            let gtype = GateType::from_keyword(kw).ok_or_else(|| NetlistError::UnsupportedGate {
                keyword: kw.to_string(),
                line: Some(line_no),
            })?;
            let fanin = split_args(args).map_err(|m| syntax(&m))?;
            if fanin.is_empty() {
                return Err(syntax("gate has no fanin"));
            }
            b.record_line(lhs, line_no);
            b.gate(GateSpec::new(lhs, gtype, fanin));
        } else {
            let (kw, args) = split_call(line).ok_or_else(|| syntax("expected INPUT(x), OUTPUT(y) or assignment"))?;
            let names = split_args(args).map_err(|m| syntax(&m))?;
            if names.len() != 1 {
                return Err(syntax("INPUT/OUTPUT take exactly one signal"));
            }
            let name = names.into_iter().next().unwrap_or_default();
            match kw.to_ascii_uppercase().as_str() {
                "INPUT" => {
                    b.record_line(&name, line_no);
                    if name.starts_with(&opts.key_prefix) {
                        b.key_input(name);
                    } else {
                        b.input(name);
                    }
                }
                "OUTPUT" => {
                    b.record_line(&format!("OUTPUT({name})"), line_no);
                    b.output(name);
                }
                other => return Err(syntax(&format!("unknown declaration `{other}`"))),
            }
        }
    }
    b.build()
}

fn is_name(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(|c| c.is_whitespace() || matches!(c, '(' | ')' | ',' | '='))
}

fn split_call(s: &str) -> Option<(&str, &str)> {
    let open = s.find('(')?;
    if !s.ends_with(')') {
        return None;
    }
    let kw = s[..open].trim();
    if kw.is_empty() || kw.contains(char::is_whitespace) {
        return None;
    }
    Some((kw, &s[open + 1..s.len() - 1]))
}

fn split_args(s: &str) -> Result<Vec<String>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|a| {
            let a = a.trim();
            if is_name(a) {
                Ok(a.to_string())
            } else {
                Err(format!("invalid signal name `{a}`"))
            }
        })
        .collect()
}

/// Deterministic serialisation: inputs, key inputs, outputs, then gates in
/// topological order.
pub fn write_bench(n: &Netlist) -> Result<String, NetlistError> {
    if let Some(g) = n.gates().iter().find(|g| g.gtype.is_pseudo()) {
        return Err(NetlistError::Unserializable(g.name.clone()));
    }
    let mut out = String::new();
    let _ = writeln!(out, "# {}", n.name());
    let _ = writeln!(
        out,
        "# {} inputs, {} key inputs, {} outputs, {} gates",
        n.primary_inputs().len(),
        n.key_inputs().len(),
        n.primary_outputs().len(),
        n.num_gates()
    );
    for pi in n.primary_inputs() {
        let _ = writeln!(out, "INPUT({pi})");
    }
    for ki in n.key_inputs() {
        let _ = writeln!(out, "INPUT({ki})");
    }
    for po in n.output_names() {
        let _ = writeln!(out, "OUTPUT({po})");
    }
    for g in n.gates() {
        let args: Vec<&str> = g.fanin.iter().map(|&s| n.signal_name(s)).collect();
        let _ = writeln!(out, "{} = {}({})", g.name, g.gtype.keyword(), args.join(", "));
    }
    Ok(out)
}
