//! Ingestion of regional cumulative-count series and construction of
//! fit-ready blocks.
//!
//! Raw per-region daily cumulative cases and deaths are standardized to rates
//! per `per` inhabitants (default 100,000), aligned at the onset time (the
//! first day the case rate reaches the onset threshold) and rescaled in time.
//! Each region becomes one [`Block`], the unit of cluster assignment.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Raw per-region daily cumulative counts plus the region's population.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSeries {
    pub region_id: String,
    pub dates: Vec<NaiveDate>,
    pub cases: Vec<u64>,
    pub deaths: Vec<u64>,
    pub population: u64,
}

impl RegionSeries {
    /// Validates lengths and the daily calendar structure. Cumulative
    /// monotonicity is handled separately by [`RegionSeries::enforce_cumulative`].
    pub fn new(
        region_id: impl Into<String>,
        dates: Vec<NaiveDate>,
        cases: Vec<u64>,
        deaths: Vec<u64>,
        population: u64,
    ) -> Result<Self, Error> {
        let region_id = region_id.into();
        if dates.is_empty() || dates.len() != cases.len() || dates.len() != deaths.len() {
            return Err(Error::InvalidParameter(format!(
                "region {region_id}: dates/cases/deaths must have equal nonzero lengths"
            )));
        }
        if population == 0 {
            return Err(Error::BadPopulation { region: region_id });
        }
        for w in dates.windows(2) {
            let gap = (w[1] - w[0]).num_days();
            if gap <= 0 {
                return Err(Error::InvalidParameter(format!(
                    "region {region_id}: dates must be strictly increasing"
                )));
            }
            if gap != 1 {
                return Err(Error::DateGap {
                    region: region_id,
                    before: w[0].to_string(),
                    after: w[1].to_string(),
                });
            }
        }
        Ok(Self {
            region_id,
            dates,
            cases,
            deaths,
            population,
        })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Applies the cumulative-count policy. Under [`CumulativePolicy::Clamp`]
    /// every value is replaced by the running maximum and the return value
    /// says whether anything changed; under [`CumulativePolicy::Strict`] a
    /// decreasing value is an error.
    pub fn enforce_cumulative(&mut self, policy: CumulativePolicy) -> Result<bool, Error> {
        let mut clamped = false;
        for (column, values) in [("cases", &mut self.cases), ("deaths", &mut self.deaths)] {
            let mut running = 0u64;
            for (i, v) in values.iter_mut().enumerate() {
                if *v < running {
                    match policy {
                        CumulativePolicy::Strict => {
                            return Err(Error::NonCumulative {
                                region: self.region_id.clone(),
                                column,
                                date: self.dates[i].to_string(),
                            });
                        }
                        CumulativePolicy::Clamp => {
                            *v = running;
                            clamped = true;
                        }
                    }
                }
                running = *v;
            }
        }
        Ok(clamped)
    }
}

/// How to treat decreasing cumulative counts (real feeds contain corrections).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CumulativePolicy {
    /// Replace each value with the running maximum.
    #[default]
    Clamp,
    /// Reject the region with an error.
    Strict,
}

/// Time rescaling applied to aligned day offsets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeScale {
    /// Divide by the maximum aligned day offset over all retained blocks, so
    /// fitted time lives in [0, 1]. The resolved scale is recorded in the
    /// output for mapping back to days.
    Auto,
    Fixed(f64),
}

/// Ingestion and alignment settings.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub onset_threshold: f64,
    pub per: f64,
    pub time_scale: TimeScale,
    pub truncate_pre_onset: bool,
    pub cumulative: CumulativePolicy,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            onset_threshold: 1.0,
            per: 100_000.0,
            time_scale: TimeScale::Auto,
            truncate_pre_onset: true,
            cumulative: CumulativePolicy::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !crate::is_positive(self.onset_threshold) {
            return Err(Error::InvalidConfig(
                "onset threshold must be a positive real".into(),
            ));
        }
        if !crate::is_positive(self.per) {
            return Err(Error::InvalidConfig(
                "population adjustment base must be a positive real".into(),
            ));
        }
        if let TimeScale::Fixed(s) = self.time_scale {
            if !crate::is_positive(s) {
                return Err(Error::InvalidConfig(
                    "time scale must be a positive real".into(),
                ));
            }
        }
        Ok(())
    }
}

/// One region's aligned, population-adjusted bivariate sequence.
///
/// `times` are days since onset divided by the time scale; `obs` pairs are
/// (case rate, death rate) per `per` inhabitants.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub region_id: String,
    pub times: Vec<f64>,
    pub obs: Vec<[f64; 2]>,
}

impl Block {
    pub fn new(
        region_id: impl Into<String>,
        times: Vec<f64>,
        obs: Vec<[f64; 2]>,
    ) -> Result<Self, Error> {
        let region_id = region_id.into();
        if times.is_empty() || times.len() != obs.len() {
            return Err(Error::InvalidParameter(format!(
                "block {region_id}: times and obs must have equal nonzero lengths"
            )));
        }
        if times.iter().any(|t| !t.is_finite())
            || obs.iter().any(|o| !o[0].is_finite() || !o[1].is_finite())
        {
            return Err(Error::InvalidParameter(format!(
                "block {region_id}: non-finite values"
            )));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(format!(
                "block {region_id}: times must be strictly increasing"
            )));
        }
        Ok(Self {
            region_id,
            times,
            obs,
        })
    }

    /// Sequence length `n_b`.
    pub fn n(&self) -> usize {
        self.times.len()
    }
}

/// Converts raw cumulative counts into rates per `per` inhabitants,
/// `rate = count / population * per`.
pub fn adjust_population(series: &RegionSeries, per: f64) -> Result<Vec<[f64; 2]>, Error> {
    if series.population == 0 {
        return Err(Error::BadPopulation {
            region: series.region_id.clone(),
        });
    }
    if !crate::is_positive(per) {
        return Err(Error::InvalidConfig(
            "population adjustment base must be a positive real".into(),
        ));
    }
    let pop = series.population as f64;
    Ok(series
        .cases
        .iter()
        .zip(&series.deaths)
        .map(|(&c, &d)| [c as f64 / pop * per, d as f64 / pop * per])
        .collect())
}

/// Index of the first case rate at or above `threshold`, if any.
pub fn compute_onset(rates_cases: &[f64], threshold: f64) -> Option<usize> {
    rates_cases.iter().position(|&r| r >= threshold)
}

/// Aligns one region at its onset and builds a [`Block`].
///
/// Returns `Ok(None)` when the region never reaches the onset threshold, in
/// which case it is excluded from the fitted dataset. Times are
/// `(date - onset date) / time_scale` in days; with `truncate_pre_onset`
/// observations before onset are dropped, so the block starts at time 0.
pub fn align_and_build(
    series: &RegionSeries,
    threshold: f64,
    per: f64,
    time_scale: f64,
    truncate_pre_onset: bool,
) -> Result<Option<Block>, Error> {
    if !crate::is_positive(time_scale) {
        return Err(Error::InvalidConfig(
            "time scale must be a positive real".into(),
        ));
    }
    let rates = adjust_population(series, per)?;
    let onset = match compute_onset(&rates.iter().map(|r| r[0]).collect::<Vec<_>>(), threshold) {
        Some(i) => i,
        None => return Ok(None),
    };
    let start = if truncate_pre_onset { onset } else { 0 };
    let onset_date = series.dates[onset];
    let times: Vec<f64> = series.dates[start..]
        .iter()
        .map(|d| (*d - onset_date).num_days() as f64 / time_scale)
        .collect();
    let obs = rates[start..].to_vec();
    Ok(Some(Block::new(series.region_id.clone(), times, obs)?))
}

/// Output of [`load_dataset`]: blocks, the resolved time scale, and
/// bookkeeping about exclusions and repairs.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub blocks: Vec<Block>,
    pub time_scale: f64,
    /// Regions that never reached the onset threshold, excluded from fitting.
    pub excluded: Vec<String>,
    /// Regions whose cumulative counts needed clamping.
    pub clamped: Vec<String>,
    /// Raw series rows read from the input file.
    pub total_rows: usize,
    /// Rows surviving truncation and region exclusion; equals the sum of
    /// block lengths.
    pub retained_rows: usize,
}

/// Parsed rows per region: `(date, cases, deaths, source line)`.
type SeriesRows = BTreeMap<String, Vec<(NaiveDate, u64, u64, u64)>>;

fn read_series_file(path: &Path) -> Result<SeriesRows, Error> {
    let file = File::open(path).map_err(|source| Error::FileIo {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(BufReader::new(file));
    let malformed = |line: u64, message: String| Error::MalformedRow {
        path: path.to_path_buf(),
        line,
        message,
    };
    {
        let headers = reader
            .headers()
            .map_err(|e| malformed(1, e.to_string()))?
            .clone();
        let expect = ["region", "date", "cases", "deaths"];
        if headers.iter().collect::<Vec<_>>() != expect {
            return Err(malformed(
                1,
                format!("expected header `region,date,cases,deaths`, got `{}`", headers.iter().collect::<Vec<_>>().join(","))
            ));
        }
    }
    let mut per_region = SeriesRows::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            malformed(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 4 {
            return Err(malformed(line, format!("expected 4 fields, got {}", record.len())));
        }
        let region = record[0].to_string();
        if region.is_empty() {
            return Err(malformed(line, "empty region identifier".into()));
        }
        let date = NaiveDate::parse_from_str(&record[1], "%Y-%m-%d")
            .map_err(|e| malformed(line, format!("bad ISO-8601 date `{}`: {e}", &record[1])))?;
        let cases: u64 = record[2]
            .parse()
            .map_err(|e| malformed(line, format!("bad cases count `{}`: {e}", &record[2])))?;
        let deaths: u64 = record[3]
            .parse()
            .map_err(|e| malformed(line, format!("bad deaths count `{}`: {e}", &record[3])))?;
        per_region
            .entry(region)
            .or_default()
            .push((date, cases, deaths, line));
    }
    Ok(per_region)
}

fn read_population_file(path: &Path) -> Result<BTreeMap<String, u64>, Error> {
    let file = File::open(path).map_err(|source| Error::FileIo {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(BufReader::new(file));
    let malformed = |line: u64, message: String| Error::MalformedRow {
        path: path.to_path_buf(),
        line,
        message,
    };
    {
        let headers = reader
            .headers()
            .map_err(|e| malformed(1, e.to_string()))?
            .clone();
        if headers.iter().collect::<Vec<_>>() != ["region", "population"] {
            return Err(malformed(
                1,
                format!("expected header `region,population`, got `{}`", headers.iter().collect::<Vec<_>>().join(","))
            ));
        }
    }
    let mut populations = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            malformed(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 2 {
            return Err(malformed(line, format!("expected 2 fields, got {}", record.len())));
        }
        let region = record[0].to_string();
        let population: u64 = record[1]
            .parse()
            .map_err(|e| malformed(line, format!("bad population `{}`: {e}", &record[1])))?;
        if population == 0 {
            return Err(Error::BadPopulation { region });
        }
        if populations.insert(region.clone(), population).is_some() {
            return Err(malformed(line, format!("duplicate population record for region {region}")));
        }
    }
    Ok(populations)
}

/// Loads the series and population CSV files and builds one block per region
/// with a population record and a valid onset. Regions are ordered
/// lexicographically by identifier.
pub fn load_dataset(
    series_path: &Path,
    population_path: &Path,
    config: &PipelineConfig,
) -> Result<Dataset, Error> {
    config.validate()?;
    let per_region = read_series_file(series_path)?;
    if per_region.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "no series rows in {}",
            series_path.display()
        )));
    }
    let populations = read_population_file(population_path)?;

    let missing: Vec<String> = per_region
        .keys()
        .filter(|r| !populations.contains_key(*r))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingPopulation { regions: missing });
    }

    let mut total_rows = 0usize;
    let mut clamped = Vec::new();
    let mut series_list = Vec::new();
    for (region, mut rows) in per_region {
        total_rows += rows.len();
        rows.sort_by_key(|r| r.0);
        for w in rows.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::DuplicateRow {
                    region,
                    date: w[0].0.to_string(),
                    lines: vec![w[0].3, w[1].3],
                });
            }
        }
        let population = populations[&region];
        let dates: Vec<NaiveDate> = rows.iter().map(|r| r.0).collect();
        let cases: Vec<u64> = rows.iter().map(|r| r.1).collect();
        let deaths: Vec<u64> = rows.iter().map(|r| r.2).collect();
        let mut series = RegionSeries::new(region, dates, cases, deaths, population)?;
        if series.enforce_cumulative(config.cumulative)? {
            clamped.push(series.region_id.clone());
        }
        series_list.push(series);
    }

    // First pass: onsets and day offsets, to resolve an automatic time scale.
    let mut aligned = Vec::new();
    let mut excluded = Vec::new();
    let mut max_offset_days = 0i64;
    for series in &series_list {
        let rates = adjust_population(series, config.per)?;
        let case_rates: Vec<f64> = rates.iter().map(|r| r[0]).collect();
        match compute_onset(&case_rates, config.onset_threshold) {
            Some(onset) => {
                let span = (*series.dates.last().unwrap() - series.dates[onset]).num_days();
                max_offset_days = max_offset_days.max(span);
                aligned.push(series);
            }
            None => excluded.push(series.region_id.clone()),
        }
    }
    if aligned.is_empty() {
        return Err(Error::EmptyDataset(
            "no region reaches the onset threshold".into(),
        ));
    }

    let time_scale = match config.time_scale {
        TimeScale::Fixed(s) => s,
        TimeScale::Auto => {
            if max_offset_days > 0 {
                max_offset_days as f64
            } else {
                1.0
            }
        }
    };

    let mut blocks = Vec::new();
    let mut retained_rows = 0usize;
    for series in aligned {
        let block = align_and_build(
            series,
            config.onset_threshold,
            config.per,
            time_scale,
            config.truncate_pre_onset,
        )?
        .expect("onset existence checked above");
        retained_rows += block.n();
        blocks.push(block);
    }

    Ok(Dataset {
        blocks,
        time_scale,
        excluded,
        clamped,
        total_rows,
        retained_rows,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct BlockExport {
    region: String,
    times: Vec<f64>,
    cases: Vec<f64>,
    deaths: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BlocksExport {
    time_scale: f64,
    blocks: Vec<BlockExport>,
}

/// Serializes blocks to the debugging JSON format: an array of
/// `{region, times[], cases[], deaths[]}` with the time scale at top level.
pub fn blocks_to_json(blocks: &[Block], time_scale: f64) -> Result<String, Error> {
    let export = BlocksExport {
        time_scale,
        blocks: blocks
            .iter()
            .map(|b| BlockExport {
                region: b.region_id.clone(),
                times: b.times.clone(),
                cases: b.obs.iter().map(|o| o[0]).collect(),
                deaths: b.obs.iter().map(|o| o[1]).collect(),
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&export)?)
}

/// Reads blocks back from the debugging JSON format.
pub fn blocks_from_json(text: &str) -> Result<(Vec<Block>, f64), Error> {
    let export: BlocksExport = serde_json::from_str(text)?;
    let mut blocks = Vec::with_capacity(export.blocks.len());
    for b in export.blocks {
        if b.times.len() != b.cases.len() || b.times.len() != b.deaths.len() {
            return Err(Error::InvalidParameter(format!(
                "block {}: times/cases/deaths lengths differ",
                b.region
            )));
        }
        let obs = b
            .cases
            .iter()
            .zip(&b.deaths)
            .map(|(&c, &d)| [c, d])
            .collect();
        blocks.push(Block::new(b.region, b.times, obs)?);
    }
    Ok((blocks, export.time_scale))
}

pub fn write_blocks_json(path: &Path, blocks: &[Block], time_scale: f64) -> Result<(), Error> {
    let mut file = BufWriter::new(File::create(path).map_err(|source| Error::FileIo {
        path: path.to_path_buf(),
        source,
    })?);
    file.write_all(blocks_to_json(blocks, time_scale)?.as_bytes())?;
    file.write_all(b"\n")?;
    Ok(())
}

pub fn read_blocks_json(path: &Path) -> Result<(Vec<Block>, f64), Error> {
    let mut text = String::new();
    File::open(path)
        .map_err(|source| Error::FileIo {
            path: path.to_path_buf(),
            source,
        })?
        .read_to_string(&mut text)?;
    blocks_from_json(&text)
}
