//! MovingAI `.map`/`.scen` parsing, instance construction, and the text
//! formats for solutions and run records.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::grid::{Cell, GridError, GridMap, Instance, PathSet};

#[derive(Debug, Error, PartialEq, Eq)]
#[error("line {line}: {msg}")]
pub struct ParseError {
    /// 1-based line number (0 when the input as a whole is at fault).
    pub line: usize,
    pub msg: String,
}

impl ParseError {
    fn new(line: usize, msg: impl Into<String>) -> Self {
        Self {
            line,
            msg: msg.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum BenchIoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: ParseError },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InstanceError {
    #[error("an instance needs at least one agent")]
    NoAgents,
    #[error("requested {requested} agents but the scenario has only {available} entries")]
    TooMany { requested: usize, available: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
}

fn read(path: &Path) -> Result<String, BenchIoError> {
    std::fs::read_to_string(path).map_err(|source| BenchIoError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn load_map(path: impl AsRef<Path>) -> Result<GridMap, BenchIoError> {
    let path = path.as_ref();
    parse_map(&read(path)?).map_err(|source| BenchIoError::Parse {
        path: path.to_owned(),
        source,
    })
}

pub fn load_scen(path: impl AsRef<Path>) -> Result<Vec<ScenarioEntry>, BenchIoError> {
    let path = path.as_ref();
    parse_scen(&read(path)?).map_err(|source| BenchIoError::Parse {
        path: path.to_owned(),
        source,
    })
}

fn is_free_char(ch: char) -> Option<bool> {
    match ch {
        '.' | 'G' | 'S' => Some(true),
        '@' | 'O' | 'T' | 'W' => Some(false),
        _ => None,
    }
}

/// Parse a MovingAI `.map` file.
pub fn parse_map(text: &str) -> Result<GridMap, ParseError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    let mut width = None;
    let mut height = None;
    let mut saw_type = false;
    loop {
        let (no, line) = lines
            .next()
            .ok_or_else(|| ParseError::new(0, "missing `map` header line"))?;
        let mut parts = line.split_whitespace();
        match (parts.next(), parts.next(), parts.next()) {
            (Some("type"), Some(_), None) if !saw_type => saw_type = true,
            (Some("height"), Some(v), None) => {
                height = Some(v.parse::<u32>().map_err(|_| ParseError::new(no, "bad height"))?)
            }
            (Some("width"), Some(v), None) => {
                width = Some(v.parse::<u32>().map_err(|_| ParseError::new(no, "bad width"))?)
            }
            (Some("map"), None, None) => break,
            _ => return Err(ParseError::new(no, format!("malformed header line `{line}`"))),
        }
    }
    if !saw_type {
        return Err(ParseError::new(1, "missing `type` header line"));
    }
    let (Some(width), Some(height)) = (width, height) else {
        return Err(ParseError::new(0, "header must declare height and width"));
    };
    if width == 0 || height == 0 {
        return Err(ParseError::new(0, "map dimensions must be positive"));
    }

    let mut blocked = Vec::new();
    let mut rows = 0u32;
    let mut last = 0;
    for (no, line) in lines {
        last = no;
        if rows == height {
            if line.trim().is_empty() {
                continue;
            }
            return Err(ParseError::new(no, format!("expected {height} rows, found more")));
        }
        let len = line.chars().count();
        if len != width as usize {
            return Err(ParseError::new(
                no,
                format!("row has {len} cells, expected {width}"),
            ));
        }
        for (x, ch) in line.chars().enumerate() {
            match is_free_char(ch) {
                Some(true) => {}
                Some(false) => blocked.push(Cell::new(x as u32, rows)),
                None => {
                    return Err(ParseError::new(no, format!("unknown map character `{ch}`")))
                }
            }
        }
        rows += 1;
    }
    if rows != height {
        return Err(ParseError::new(
            last,
            format!("expected {height} rows, found {rows}"),
        ));
    }
    GridMap::new(width, height, blocked).map_err(|e| ParseError::new(0, e.to_string()))
}

/// Render the grid body, one row per line, `.` free and `@` blocked.
pub fn render_map_body(map: &GridMap) -> String {
    let mut out = String::with_capacity(map.num_cells() + map.height() as usize);
    for y in 0..map.height() {
        for x in 0..map.width() {
            out.push(if map.is_free(Cell::new(x, y)) { '.' } else { '@' });
        }
        out.push('\n');
    }
    out
}

pub fn render_map(map: &GridMap) -> String {
    format!(
        "type octile\nheight {}\nwidth {}\nmap\n{}",
        map.height(),
        map.width(),
        render_map_body(map)
    )
}

/// One line of a MovingAI scenario file.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioEntry {
    pub bucket: i64,
    pub map_name: String,
    pub map_width: u32,
    pub map_height: u32,
    pub start: Cell,
    pub goal: Cell,
    /// Single-agent shortest path length from the file; solvers ignore it.
    pub optimal_length: f64,
}

/// Parse a MovingAI scenario (v1) file.
pub fn parse_scen(text: &str) -> Result<Vec<ScenarioEntry>, ParseError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    match lines.next() {
        Some((_, h)) if matches!(h.split_whitespace().collect::<Vec<_>>()[..], ["version", "1" | "1.0"] | ["1"]) => {}
        Some((no, h)) => return Err(ParseError::new(no, format!("expected `version 1`, got `{h}`"))),
        None => return Err(ParseError::new(1, "empty scenario file")),
    }
    let mut out = Vec::new();
    for (no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = if line.contains('\t') {
            line.split('\t').collect()
        } else {
            line.split_whitespace().collect()
        };
        if fields.len() != 9 {
            return Err(ParseError::new(
                no,
                format!("expected 9 fields, found {}", fields.len()),
            ));
        }
        let int = |i: usize, what: &str| -> Result<u32, ParseError> {
            fields[i]
                .trim()
                .parse()
                .map_err(|_| ParseError::new(no, format!("bad {what} `{}`", fields[i])))
        };
        let bucket = fields[0]
            .trim()
            .parse()
            .map_err(|_| ParseError::new(no, format!("bad bucket `{}`", fields[0])))?;
        let map_width = int(2, "map width")?;
        let map_height = int(3, "map height")?;
        let start = Cell::new(int(4, "start x")?, int(5, "start y")?);
        let goal = Cell::new(int(6, "goal x")?, int(7, "goal y")?);
        let optimal_length = fields[8]
            .trim()
            .parse()
            .map_err(|_| ParseError::new(no, format!("bad optimal length `{}`", fields[8])))?;
        for (what, c) in [("start", start), ("goal", goal)] {
            if c.x >= map_width || c.y >= map_height {
                return Err(ParseError::new(
                    no,
                    format!("{what} {c} outside declared {map_width}x{map_height}"),
                ));
            }
        }
        out.push(ScenarioEntry {
            bucket,
            map_name: fields[1].to_string(),
            map_width,
            map_height,
            start,
            goal,
            optimal_length,
        });
    }
    Ok(out)
}

/// Instance built from the first `n` scenario entries, in file order.
pub fn make_instance(
    map: Arc<GridMap>,
    entries: &[ScenarioEntry],
    n: usize,
) -> Result<Instance, InstanceError> {
    if n == 0 {
        return Err(InstanceError::NoAgents);
    }
    if n > entries.len() {
        return Err(InstanceError::TooMany {
            requested: n,
            available: entries.len(),
        });
    }
    let starts = entries[..n].iter().map(|e| e.start).collect();
    let goals = entries[..n].iter().map(|e| e.goal).collect();
    Ok(Instance::new(map, starts, goals)?)
}

/// One line per timestep: `t: (x1,y1) (x2,y2) ...`.
pub fn write_solution(paths: &PathSet) -> String {
    let mut out = String::new();
    for t in 0..paths.horizon() {
        let _ = write!(out, "{t}:");
        for p in &paths.paths {
            let c = p[t.min(p.len() - 1)];
            let _ = write!(out, " ({},{})", c.x, c.y);
        }
        out.push('\n');
    }
    out
}

pub fn read_solution(text: &str) -> Result<PathSet, ParseError> {
    let mut configs: Vec<Vec<Cell>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (t, rest) = line
            .split_once(':')
            .ok_or_else(|| ParseError::new(no, "missing `t:` prefix"))?;
        let t: usize = t
            .trim()
            .parse()
            .map_err(|_| ParseError::new(no, format!("bad timestep `{t}`")))?;
        if t != configs.len() {
            return Err(ParseError::new(
                no,
                format!("expected timestep {}, found {t}", configs.len()),
            ));
        }
        let mut cells = Vec::new();
        for tok in rest.split_whitespace() {
            let inner = tok
                .strip_prefix('(')
                .and_then(|s| s.strip_suffix(')'))
                .ok_or_else(|| ParseError::new(no, format!("bad cell `{tok}`")))?;
            let (x, y) = inner
                .split_once(',')
                .ok_or_else(|| ParseError::new(no, format!("bad cell `{tok}`")))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<u32>()
                    .map_err(|_| ParseError::new(no, format!("bad cell `{tok}`")))
            };
            cells.push(Cell::new(parse(x)?, parse(y)?));
        }
        if let Some(first) = configs.first() {
            if first.len() != cells.len() {
                return Err(ParseError::new(
                    no,
                    format!("expected {} agents, found {}", first.len(), cells.len()),
                ));
            }
        }
        if cells.is_empty() {
            return Err(ParseError::new(no, "timestep lists no agents"));
        }
        configs.push(cells);
    }
    if configs.is_empty() {
        return Err(ParseError::new(0, "empty solution"));
    }
    Ok(PathSet::from_configurations(&configs))
}

/// Result of one solver run, one CSV row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunRecord {
    pub algo: String,
    pub ordering_mode: String,
    pub shield: String,
    pub map: String,
    pub scen: String,
    pub n_agents: usize,
    pub seed: i64,
    pub success: bool,
    pub flowtime: u64,
    pub makespan: u64,
    pub runtime_ms: u64,
    pub hl_nodes: u64,
    pub params: Vec<(String, String)>,
}

impl RunRecord {
    pub fn param(&self, key: &str) -> Option<&str> {
        self.params
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn set_param(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        let value = value.to_string();
        match self.params.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => slot.1 = value,
            None => self.params.push((key, value)),
        }
    }

    /// Mean per-agent path cost, `None` for failed runs.
    pub fn mean_cost(&self) -> Option<f64> {
        (self.success && self.n_agents > 0).then(|| self.flowtime as f64 / self.n_agents as f64)
    }
}

pub const CSV_HEADER: &str =
    "algo,ordering_mode,shield,map,scen,n_agents,seed,success,flowtime,makespan,runtime_ms,hl_nodes,params";

/// Replace characters outside `[A-Za-z0-9_.-]` so labels never need quoting.
pub fn sanitize_label(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn params_field(params: &[(String, String)]) -> String {
    params
        .iter()
        .map(|(k, v)| format!("{}={}", sanitize_label(k), sanitize_label(v)))
        .collect::<Vec<_>>()
        .join(";")
}

pub fn csv_row(r: &RunRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{}",
        sanitize_label(&r.algo),
        sanitize_label(&r.ordering_mode),
        sanitize_label(&r.shield),
        sanitize_label(&r.map),
        sanitize_label(&r.scen),
        r.n_agents,
        r.seed,
        r.success,
        r.flowtime,
        r.makespan,
        r.runtime_ms,
        r.hl_nodes,
        params_field(&r.params)
    )
}

pub fn write_csv(records: &[RunRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&csv_row(r));
        out.push('\n');
    }
    out
}

pub fn read_csv(text: &str) -> Result<Vec<RunRecord>, ParseError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == CSV_HEADER => {}
        _ => return Err(ParseError::new(1, "missing or unexpected CSV header")),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 13 {
            return Err(ParseError::new(no, format!("expected 13 columns, found {}", f.len())));
        }
        fn num<T: std::str::FromStr>(no: usize, s: &str, what: &str) -> Result<T, ParseError> {
            s.parse()
                .map_err(|_| ParseError::new(no, format!("bad {what} `{s}`")))
        }
        let params = if f[12].is_empty() {
            Vec::new()
        } else {
            f[12]
                .split(';')
                .map(|kv| {
                    kv.split_once('=')
                        .map(|(k, v)| (k.to_string(), v.to_string()))
                        .ok_or_else(|| ParseError::new(no, format!("bad param `{kv}`")))
                })
                .collect::<Result<_, _>>()?
        };
        out.push(RunRecord {
            algo: f[0].into(),
            ordering_mode: f[1].into(),
            shield: f[2].into(),
            map: f[3].into(),
            scen: f[4].into(),
            n_agents: num(no, f[5], "n_agents")?,
            seed: num(no, f[6], "seed")?,
            success: num(no, f[7], "success")?,
            flowtime: num(no, f[8], "flowtime")?,
            makespan: num(no, f[9], "makespan")?,
            runtime_ms: num(no, f[10], "runtime_ms")?,
            hl_nodes: num(no, f[11], "hl_nodes")?,
            params,
        });
    }
    Ok(out)
}
