//! Running an external SMT solver on the emitted problem.
//!
//! The command is a whitespace-separated template; `{file}` is replaced by
//! the path of a temporary `.smt2` file, otherwise the problem is written
//! to the solver's standard input.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::process::{Command, Stdio};
use std::time::Duration;

use super::{emit_smtlib, Budget, MinOnesProblem, Model, SolveError};
use crate::catalog::TupleId;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExternalSolver {
    pub command: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SolverOutput {
    pub sat: bool,
    pub bools: BTreeMap<String, bool>,
    pub ints: BTreeMap<String, i128>,
}

impl ExternalSolver {
    pub fn new(command: &str) -> ExternalSolver {
        ExternalSolver {
            command: command.to_string(),
        }
    }

    pub fn solve(
        &self,
        p: &MinOnesProblem<'_>,
        name: &dyn Fn(TupleId) -> String,
        budget: &Budget,
    ) -> Result<Model, SolveError> {
        let text = emit_smtlib(p, name);
        let stdout = self.run(&text, budget)?;
        let out = parse_solver_output(&stdout)?;
        if !out.sat {
            return Err(SolveError::Unsat);
        }
        let by_name: HashMap<String, TupleId> = p.vars.iter().map(|v| (name(*v), *v)).collect();
        let mut true_ids: Vec<TupleId> = out
            .bools
            .iter()
            .filter(|(_, v)| **v)
            .filter_map(|(k, _)| by_name.get(k).copied())
            .collect();
        true_ids.sort_unstable();
        let mut params = BTreeMap::new();
        for s in &p.params {
            let v = out
                .ints
                .get(&s.name)
                .copied()
                .ok_or_else(|| SolveError::External(format!("model has no value for {}", s.name)))?;
            params.insert(s.name.clone(), v);
        }
        Ok(Model {
            cost: true_ids.len(),
            true_ids,
            params,
        })
    }

    fn run(&self, text: &str, budget: &Budget) -> Result<String, SolveError> {
        let err = |e: std::io::Error| SolveError::External(e.to_string());
        let mut parts: Vec<String> = self.command.split_whitespace().map(String::from).collect();
        if parts.is_empty() {
            return Err(SolveError::External("empty solver command".into()));
        }
        let mut file = None;
        if parts.iter().any(|p| p.contains("{file}")) {
            let mut f = tempfile::Builder::new().suffix(".smt2").tempfile().map_err(err)?;
            f.write_all(text.as_bytes()).map_err(err)?;
            let path = f.path().display().to_string();
            for p in &mut parts {
                *p = p.replace("{file}", &path);
            }
            file = Some(f);
        }
        let mut child = Command::new(&parts[0])
            .args(&parts[1..])
            .stdin(if file.is_some() { Stdio::null() } else { Stdio::piped() })
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(err)?;
        if file.is_none() {
            let mut stdin = child.stdin.take().expect("piped stdin");
            // a solver may exit before reading everything; its output decides
            match stdin.write_all(text.as_bytes()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(err(e)),
                _ => {}
            }
        }
        // read on a thread so a chatty solver cannot block on a full pipe
        let mut stdout = child.stdout.take().expect("piped stdout");
        let reader = std::thread::spawn(move || {
            let mut s = String::new();
            std::io::Read::read_to_string(&mut stdout, &mut s).map(|_| s)
        });
        loop {
            if child.try_wait().map_err(err)?.is_some() {
                break;
            }
            if budget.expired() {
                let _ = child.kill();
                let _ = child.wait();
                return Err(budget.timeout());
            }
            std::thread::sleep(Duration::from_millis(5));
        }
        drop(file);
        reader
            .join()
            .map_err(|_| SolveError::External("reader thread panicked".into()))?
            .map_err(err)
    }
}

#[derive(Debug)]
enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut in_str = false;
    for ch in text.chars() {
        if in_str {
            cur.push(ch);
            if ch == '"' {
                in_str = false;
            }
            continue;
        }
        match ch {
            '(' | ')' => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(ch.to_string());
            }
            c if c.is_whitespace() => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
            }
            '"' => {
                in_str = true;
                cur.push(ch);
            }
            c => cur.push(c),
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn parse_all(tokens: &[String]) -> Vec<Sexp> {
    let mut stack: Vec<Vec<Sexp>> = vec![Vec::new()];
    for t in tokens {
        match t.as_str() {
            "(" => stack.push(Vec::new()),
            ")" => {
                if stack.len() > 1 {
                    let list = stack.pop().unwrap();
                    stack.last_mut().unwrap().push(Sexp::List(list));
                }
            }
            a => stack.last_mut().unwrap().push(Sexp::Atom(a.to_string())),
        }
    }
    while stack.len() > 1 {
        let list = stack.pop().unwrap();
        stack.last_mut().unwrap().push(Sexp::List(list));
    }
    stack.pop().unwrap()
}

fn int_value(s: &Sexp) -> Option<i128> {
    match s {
        Sexp::Atom(a) => a.parse().ok(),
        Sexp::List(items) => match items.as_slice() {
            [Sexp::Atom(minus), x] if minus == "-" => int_value(x).map(|v| -v),
            _ => None,
        },
    }
}

fn collect(s: &Sexp, out: &mut SolverOutput) {
    let Sexp::List(items) = s else {
        return;
    };
    if let [Sexp::Atom(head), Sexp::Atom(name), Sexp::List(args), Sexp::Atom(sort), value] = items.as_slice() {
        if head == "define-fun" && args.is_empty() {
            match (sort.as_str(), value) {
                ("Bool", Sexp::Atom(v)) if v == "true" || v == "false" => {
                    out.bools.insert(name.clone(), v == "true");
                }
                ("Int", v) => {
                    if let Some(i) = int_value(v) {
                        out.ints.insert(name.clone(), i);
                    }
                }
                _ => {}
            }
            return;
        }
    }
    items.iter().for_each(|i| collect(i, out));
}

/// Reads `sat`/`unsat` and any `define-fun` constants from solver output.
pub fn parse_solver_output(text: &str) -> Result<SolverOutput, SolveError> {
    let exprs = parse_all(&tokenize(text));
    let mut out = SolverOutput::default();
    let verdict = exprs.iter().find_map(|e| match e {
        Sexp::Atom(a) if a == "sat" || a == "unsat" || a == "unknown" => Some(a.as_str()),
        _ => None,
    });
    match verdict {
        Some("sat") => out.sat = true,
        Some("unsat") => return Ok(out),
        Some(_) => return Err(SolveError::External("solver answered unknown".into())),
        None => {
            return Err(SolveError::External(format!(
                "no sat/unsat verdict in solver output: {}",
                text.lines().next().unwrap_or("")
            )))
        }
    }
    exprs.iter().for_each(|e| collect(e, &mut out));
    Ok(out)
}
