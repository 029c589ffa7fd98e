use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use log::warn;

use crate::error::{Error, Result};

/// The fifty U.S. states, in the order used by the bundled assets.
pub const STATES: [&str; 50] = [
    "AL", "AK", "AZ", "AR", "CA", "CO", "CT", "DE", "FL", "GA", "HI", "ID", "IL", "IN", "IA", "KS",
    "KY", "LA", "ME", "MD", "MA", "MI", "MN", "MS", "MO", "MT", "NE", "NV", "NH", "NJ", "NM", "NY",
    "NC", "ND", "OH", "OK", "OR", "PA", "RI", "SC", "SD", "TN", "TX", "UT", "VT", "VA", "WA", "WV",
    "WI", "WY",
];

/// Codes that appear in JHU data but are not modeled.
pub const EXCLUDED_REGIONS: [&str; 6] = ["DC", "PR", "GU", "VI", "AS", "MP"];

pub const ADJACENCY_CSV: &str = include_str!("../../assets/us_state_adjacency.csv");
pub const POPULATION_CSV: &str = include_str!("../../assets/us_state_population.csv");

pub const FEATURES: [&str; 3] = ["I", "R", "D"];

/// Aligned daily cumulative counts for a set of states.
#[derive(Debug, Clone, PartialEq)]
pub struct CovidPanel {
    pub states: Vec<String>,
    pub dates: Vec<NaiveDate>,
    /// `n_dates × n_states`, persons
    pub infected: Vec<Vec<f64>>,
    pub recovered: Vec<Vec<f64>>,
    pub deaths: Vec<Vec<f64>>,
    pub population: Vec<f64>,
    /// 0-1 adjacency with unit diagonal
    pub adjacency: Vec<Vec<f64>>,
}

impl CovidPanel {
    pub fn regions(&self) -> usize {
        self.states.len()
    }

    pub fn feature(&self, f: usize) -> &[Vec<f64>] {
        match f {
            0 => &self.infected,
            1 => &self.recovered,
            _ => &self.deaths,
        }
    }

    pub fn date_index(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    /// Checks shapes, daily dates, and 0-1 adjacency; sets the diagonal to 1.
    pub fn validate(mut self) -> Result<Self> {
        let (t, n) = (self.dates.len(), self.states.len());
        for m in [&self.infected, &self.recovered, &self.deaths] {
            if m.len() != t || m.iter().any(|r| r.len() != n) {
                return Err(Error::shape(format!("{t}×{n} counts"), m.len()));
            }
        }
        if self.population.len() != n || self.population.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::BadSpec("one positive population per state is required".into()));
        }
        if self.adjacency.len() != n || self.adjacency.iter().any(|r| r.len() != n) {
            return Err(Error::shape(format!("{n}×{n} adjacency"), self.adjacency.len()));
        }
        if self.adjacency.iter().flatten().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::BadSpec("adjacency must be 0-1".into()));
        }
        check_daily(&self.dates)?;
        for (i, row) in self.adjacency.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Ok(self)
    }
}

fn check_daily(dates: &[NaiveDate]) -> Result<()> {
    let mut missing = Vec::new();
    for w in dates.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::BadSpec(format!("dates not increasing at {}", w[1])));
        }
        let mut d = w[0].succ_opt().expect("date in range");
        while d < w[1] {
            missing.push(d.to_string());
            d = d.succ_opt().expect("date in range");
        }
    }
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::DateGap { missing })
    }
}

/// Forward-fills missing values (leading gaps become 0), then zeroes negative
/// daily increments and re-accumulates.
pub fn clean_cumulative(series: &[Option<f64>]) -> Vec<f64> {
    let mut filled = Vec::with_capacity(series.len());
    let mut last = 0.0;
    for v in series {
        if let Some(v) = v {
            last = *v;
        }
        filled.push(last);
    }
    let mut out = Vec::with_capacity(filled.len());
    for (t, &v) in filled.iter().enumerate() {
        out.push(match t {
            0 => v,
            _ => out[t - 1] + (v - filled[t - 1]).max(0.0),
        });
    }
    out
}

fn parse_err(file: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        file: file.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
        .or_else(|_| NaiveDate::parse_from_str(s.trim(), "%m/%d/%y"))
        .ok()
}

/// Maps a code to a modeled state, `None` for excluded regions.
fn state_code(code: &str) -> Result<Option<&'static str>> {
    let code = code.trim().to_ascii_uppercase();
    if let Some(s) = STATES.iter().find(|s| **s == code) {
        return Ok(Some(s));
    }
    if EXCLUDED_REGIONS.contains(&code.as_str()) {
        return Ok(None);
    }
    Err(Error::UnknownState(code))
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| parse_err(path, 0, e.to_string()))
}

/// Wide cumulative-count table: dates and per-state series (county rows summed).
#[derive(Debug, Clone)]
struct WideTable {
    dates: Vec<NaiveDate>,
    series: BTreeMap<&'static str, Vec<Option<f64>>>,
}

fn parse_wide(text: &str, file: &Path) -> Result<WideTable> {
    let mut rdr = reader(text);
    let headers = rdr.headers().map_err(|e| parse_err(file, 1, e.to_string()))?.clone();
    if headers.get(0).map(str::to_ascii_lowercase).as_deref() != Some("state") {
        return Err(parse_err(file, 1, "first column must be `state`"));
    }
    let dates = headers
        .iter()
        .skip(1)
        .map(|h| parse_date(h).ok_or_else(|| parse_err(file, 1, format!("bad date `{h}`"))))
        .collect::<Result<Vec<_>>>()?;
    if dates.windows(2).any(|w| w[1] <= w[0]) {
        return Err(parse_err(file, 1, "dates must be strictly increasing"));
    }
    let mut series: BTreeMap<&'static str, Vec<Option<f64>>> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(file, line, e.to_string()))?;
        if rec.len() != dates.len() + 1 {
            return Err(parse_err(file, line, format!("expected {} fields", dates.len() + 1)));
        }
        let Some(state) = state_code(&rec[0])? else {
            warn!("{}: skipping excluded region {}", file.display(), &rec[0]);
            continue;
        };
        let mut row = Vec::with_capacity(dates.len());
        let mut last = None;
        for cell in rec.iter().skip(1) {
            if cell.is_empty() {
                row.push(last);
                continue;
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(file, line, format!("bad count `{cell}`")))?;
            if !v.is_finite() {
                return Err(parse_err(file, line, format!("bad count `{cell}`")));
            }
            last = Some(v);
            row.push(last);
        }
        match series.get_mut(state) {
            None => {
                series.insert(state, row);
            }
            Some(acc) => {
                for (a, b) in acc.iter_mut().zip(row) {
                    *a = match (*a, b) {
                        (None, None) => None,
                        (x, y) => Some(x.unwrap_or(0.0) + y.unwrap_or(0.0)),
                    };
                }
            }
        }
    }
    Ok(WideTable { dates, series })
}

/// `state,population` rows; excluded regions are skipped.
pub fn parse_population(text: &str, file: &Path) -> Result<BTreeMap<&'static str, f64>> {
    let mut rdr = reader(text);
    let mut out = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(file, line, e.to_string()))?;
        if rec.len() != 2 {
            return Err(parse_err(file, line, "expected `state,population`"));
        }
        let Some(state) = state_code(&rec[0])? else {
            continue;
        };
        let p: f64 = rec[1]
            .parse()
            .map_err(|_| parse_err(file, line, format!("bad population `{}`", &rec[1])))?;
        if !(p > 0.0) || !p.is_finite() {
            return Err(parse_err(file, line, "population must be positive"));
        }
        out.insert(state, p);
    }
    Ok(out)
}

/// Square 0-1 matrix with a header row and column of state codes.
pub fn parse_adjacency(text: &str, file: &Path) -> Result<(Vec<&'static str>, Vec<Vec<f64>>)> {
    let mut rdr = reader(text);
    let headers = rdr.headers().map_err(|e| parse_err(file, 1, e.to_string()))?.clone();
    let cols = headers
        .iter()
        .skip(1)
        .map(|h| state_code(h)?.ok_or_else(|| parse_err(file, 1, format!("excluded region {h}"))))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(file, line, e.to_string()))?;
        if rec.len() != cols.len() + 1 {
            return Err(parse_err(file, line, format!("expected {} fields", cols.len() + 1)));
        }
        let state = state_code(&rec[0])?.ok_or_else(|| parse_err(file, line, "excluded region"))?;
        let row = rec
            .iter()
            .skip(1)
            .map(|c| match c {
                "0" => Ok(0.0),
                "1" => Ok(1.0),
                _ => Err(parse_err(file, line, format!("adjacency entry `{c}` is not 0/1"))),
            })
            .collect::<Result<Vec<_>>>()?;
        rows.insert(state, row);
    }
    let matrix = cols
        .iter()
        .map(|s| {
            rows.remove(s)
                .ok_or_else(|| parse_err(file, 0, format!("missing adjacency row for {s}")))
        })
        .collect::<Result<Vec<_>>>()?;
    for i in 0..cols.len() {
        for j in 0..i {
            if matrix[i][j] != matrix[j][i] {
                return Err(parse_err(
                    file,
                    i + 2,
                    format!("adjacency not symmetric for {}-{}", cols[i], cols[j]),
                ));
            }
        }
    }
    Ok((cols, matrix))
}

/// Bundled adjacency of the fifty states (shared land borders, unit diagonal).
pub fn default_adjacency() -> Vec<Vec<f64>> {
    parse_adjacency(ADJACENCY_CSV, Path::new("us_state_adjacency.csv"))
        .expect("bundled asset")
        .1
}

/// Bundled 2019 population estimates, in [`STATES`] order.
pub fn default_population() -> Vec<f64> {
    let p = parse_population(POPULATION_CSV, Path::new("us_state_population.csv"))
        .expect("bundled asset");
    STATES.iter().map(|s| p[s]).collect()
}

/// Input files of [`load_jhu_csv`].
#[derive(Debug, Clone)]
pub struct JhuPaths {
    pub confirmed: PathBuf,
    pub recovered: PathBuf,
    pub deaths: PathBuf,
    pub population: PathBuf,
    pub adjacency: PathBuf,
}

/// Loads wide JHU-format cumulative counts into a cleaned, aligned panel.
///
/// The modeled states are those of the adjacency file, in its order; each must
/// have a population and a row in every count file.
pub fn load_jhu_csv(paths: &JhuPaths) -> Result<CovidPanel> {
    let (states, adjacency) = parse_adjacency(&read(&paths.adjacency)?, &paths.adjacency)?;
    let population = parse_population(&read(&paths.population)?, &paths.population)?;
    let tables = [&paths.confirmed, &paths.recovered, &paths.deaths]
        .map(|p| read(p).and_then(|text| parse_wide(&text, p)));
    let [confirmed, recovered, deaths] = tables;
    let tables = [confirmed?, recovered?, deaths?];

    let sets: Vec<BTreeSet<NaiveDate>> =
        tables.iter().map(|t| t.dates.iter().copied().collect()).collect();
    let common: BTreeSet<NaiveDate> = sets[0]
        .iter()
        .filter(|d| sets[1].contains(d) && sets[2].contains(d))
        .copied()
        .collect();
    if sets.iter().any(|s| s.len() != common.len()) {
        warn!(
            "date ranges differ across count files; using {} common dates",
            common.len()
        );
    }
    let dates: Vec<NaiveDate> = common.into_iter().collect();
    if dates.is_empty() {
        return Err(Error::DateGap { missing: Vec::new() });
    }
    check_daily(&dates)?;

    let pop = states
        .iter()
        .map(|s| {
            population
                .get(s)
                .copied()
                .ok_or_else(|| parse_err(&paths.population, 0, format!("no population for {s}")))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut matrices = Vec::with_capacity(3);
    for (t, path) in tables.iter().zip([&paths.confirmed, &paths.recovered, &paths.deaths]) {
        let keep: Vec<usize> = dates
            .iter()
            .map(|d| t.dates.binary_search(d).expect("common date"))
            .collect();
        let mut m = vec![vec![0.0; states.len()]; dates.len()];
        for (j, s) in states.iter().enumerate() {
            let series = t
                .series
                .get(s)
                .ok_or_else(|| parse_err(path, 0, format!("no rows for {s}")))?;
            let aligned: Vec<Option<f64>> = keep.iter().map(|&i| series[i]).collect();
            for (row, v) in m.iter_mut().zip(clean_cumulative(&aligned)) {
                row[j] = v;
            }
        }
        matrices.push(m);
    }
    let deaths = matrices.pop().expect("three tables");
    let recovered = matrices.pop().expect("three tables");
    let infected = matrices.pop().expect("three tables");
    CovidPanel {
        states: states.iter().map(|s| s.to_string()).collect(),
        dates,
        infected,
        recovered,
        deaths,
        population: pop,
        adjacency,
    }
    .validate()
}

/// Writes one feature of a panel as a wide count CSV (rounded to whole persons).
pub fn write_wide_csv(panel: &CovidPanel, feature: usize, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.into()))?;
    let mut header = vec!["state".to_string()];
    header.extend(panel.dates.iter().map(|d| d.to_string()));
    w.write_record(&header).map_err(|e| Error::Io(e.into()))?;
    let m = panel.feature(feature);
    for (j, s) in panel.states.iter().enumerate() {
        let mut rec = vec![s.clone()];
        rec.extend(m.iter().map(|row| format!("{}", row[j].round())));
        w.write_record(&rec).map_err(|e| Error::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a panel's counts, population and adjacency as JHU-format files in `dir`.
pub fn write_jhu_csv(panel: &CovidPanel, dir: &Path) -> Result<JhuPaths> {
    std::fs::create_dir_all(dir)?;
    let paths = JhuPaths {
        confirmed: dir.join("confirmed.csv"),
        recovered: dir.join("recovered.csv"),
        deaths: dir.join("deaths.csv"),
        population: dir.join("population.csv"),
        adjacency: dir.join("adjacency.csv"),
    };
    write_wide_csv(panel, 0, &paths.confirmed)?;
    write_wide_csv(panel, 1, &paths.recovered)?;
    write_wide_csv(panel, 2, &paths.deaths)?;
    let mut pop = String::from("state,population\n");
    for (s, p) in panel.states.iter().zip(&panel.population) {
        pop.push_str(&format!("{s},{p}\n"));
    }
    std::fs::write(&paths.population, pop)?;
    let mut adj = format!("state,{}\n", panel.states.join(","));
    for (s, row) in panel.states.iter().zip(&panel.adjacency) {
        let cells: Vec<&str> = row.iter().map(|&v| if v != 0.0 { "1" } else { "0" }).collect();
        adj.push_str(&format!("{s},{}\n", cells.join(",")));
    }
    std::fs::write(&paths.adjacency, adj)?;
    Ok(paths)
}
