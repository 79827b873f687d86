//! The two-game experimental panel, its CSV form, and fee vectors.
//!
//! CSV schema: header `game,period,role,a1,a2,a3,a4`, 16 rows covering games
//! 1–2, periods 1–4 and roles `row`/`col`. Frequencies are three-decimal fixed
//! point; the fifth action's frequency is implied by the other four.

use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use rand_distr::{Distribution, Open01};
use serde::{Deserialize, Serialize};

use crate::baselines::revenue;
use crate::behavioral::PopulationAction;
use crate::error::{Error, Result};
use crate::estimator::ActionVector;
use crate::game_model::{Policy, N_ACTIONS};
use crate::rng::{stream, Domain};

pub const N_GAMES: usize = 2;
pub const N_PERIODS: usize = 4;

const MILLI: u32 = 1000;

/// Published panel, with the misprinted entry left as printed.
pub const RAPOPORT_BOEBEL_CSV: &str = include_str!("../data/rapoport_boebel.csv");

/// Which policy each table game ran under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum LabelMap {
    /// Table game 1 is the control policy, game 2 the treatment.
    #[default]
    #[serde(rename = "12")]
    Game1Control,
    /// Table game 1 is the treatment policy, game 2 the control.
    #[serde(rename = "21")]
    Game1Treatment,
}

impl LabelMap {
    pub const ALL: [LabelMap; 2] = [LabelMap::Game1Control, LabelMap::Game1Treatment];

    /// Zero-based table game index that ran under `policy`.
    pub fn game_of(self, policy: Policy) -> usize {
        match (self, policy) {
            (LabelMap::Game1Control, Policy::Control)
            | (LabelMap::Game1Treatment, Policy::Treatment) => 0,
            _ => 1,
        }
    }
}

impl FromStr for LabelMap {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "12" => Ok(LabelMap::Game1Control),
            "21" => Ok(LabelMap::Game1Treatment),
            other => Err(Error::InvalidConfig(format!(
                "label map must be 12 or 21, got {other}"
            ))),
        }
    }
}

impl fmt::Display for LabelMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelMap::Game1Control => "12",
            LabelMap::Game1Treatment => "21",
        })
    }
}

/// Per-action fee: row actions a1..a5, then column actions a1'..a5'.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeeVector(pub ActionVector);

impl FeeVector {
    /// Worked-example fee `(0, 1, 0, 2, 0, 0, 0, 0, 1, 1)`.
    pub const APPENDIX: FeeVector = FeeVector([0.0, 1.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
}

/// `n` fee vectors with components i.i.d. uniform on (0, 1).
pub fn generate_fees(n: usize, seed: u64) -> Vec<FeeVector> {
    let mut rng = stream(seed, Domain::Fees, 0, 0);
    (0..n)
        .map(|_| FeeVector(std::array::from_fn(|_| Open01.sample(&mut rng))))
        .collect()
}

/// Frequencies in thousandths for both roles of one period.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct MilliAction {
    row: [u32; N_ACTIONS],
    col: [u32; N_ACTIONS],
}

impl MilliAction {
    fn to_action(self, effective_count: u32) -> Result<PopulationAction> {
        let f = |m: [u32; N_ACTIONS]| m.map(|x| x as f64 / MILLI as f64);
        PopulationAction::new(f(self.row), f(self.col), effective_count)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPanel {
    /// `games[g][p]`: table game `g + 1`, table period `p + 1`.
    games: [[MilliAction; N_PERIODS]; N_GAMES],
    actions: [[PopulationAction; N_PERIODS]; N_GAMES],
    /// One-based table period held out as the long-term truth.
    pub holdout_period: usize,
    pub label_map: LabelMap,
}

#[derive(Debug, Deserialize)]
struct CsvRecord {
    game: usize,
    period: usize,
    role: String,
    a1: String,
    a2: String,
    a3: String,
    a4: String,
}

/// Parse a three-decimal fixed-point frequency into thousandths.
///
/// The published table prints one entry as `01.40` for 0.140; tokens of the
/// shape `0d.dd` are read with the decimal point restored after the leading
/// zero.
fn parse_milli(token: &str, context: &str) -> Result<u32> {
    let token = token.trim();
    let bad = || Error::Schema(format!("{context}: cannot parse frequency {token:?}"));
    let (int, frac) = token.split_once('.').unwrap_or((token, ""));
    if int.is_empty() && frac.is_empty()
        || !int.chars().all(|c| c.is_ascii_digit())
        || !frac.chars().all(|c| c.is_ascii_digit())
    {
        return Err(bad());
    }
    if int.len() == 2 && int.starts_with('0') && int != "00" && frac.len() == 2 {
        let repaired = format!("0.{}{}", &int[1..], frac);
        log::info!("{context}: repaired misprinted frequency {token:?} as {repaired}");
        return parse_milli(&repaired, context);
    }
    if frac.len() > 3 {
        return Err(Error::Schema(format!(
            "{context}: {token:?} has more than three decimals"
        )));
    }
    let int: u32 = if int.is_empty() {
        0
    } else {
        int.parse().map_err(|_| bad())?
    };
    let frac_milli: u32 = if frac.is_empty() {
        0
    } else {
        format!("{frac:0<3}").parse().map_err(|_| bad())?
    };
    let value = int
        .checked_mul(MILLI)
        .and_then(|v| v.checked_add(frac_milli))
        .ok_or_else(bad)?;
    if value > MILLI {
        return Err(Error::Range(format!(
            "{context}: frequency {token} exceeds 1"
        )));
    }
    Ok(value)
}

fn complete(four: [u32; 4], context: &str) -> Result<[u32; N_ACTIONS]> {
    let sum: u32 = four.iter().sum();
    if sum > MILLI {
        return Err(Error::Range(format!(
            "{context}: reported frequencies sum to {:.3}, implied fifth action is negative",
            sum as f64 / MILLI as f64
        )));
    }
    Ok([four[0], four[1], four[2], four[3], MILLI - sum])
}

fn format_milli(m: u32) -> String {
    format!("{}.{:03}", m / MILLI, m % MILLI)
}

impl ExperimentPanel {
    pub fn load<R: Read>(source: R, effective_count: u32) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(source);
        let headers = reader.headers()?.clone();
        let expected = ["game", "period", "role", "a1", "a2", "a3", "a4"];
        if headers.iter().ne(expected.iter().copied()) {
            return Err(Error::Schema(format!(
                "expected header {}, got {}",
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }

        let mut slots: [[[Option<[u32; N_ACTIONS]>; 2]; N_PERIODS]; N_GAMES] = Default::default();
        let mut rows = 0;
        for record in reader.deserialize::<CsvRecord>() {
            let rec = record.map_err(|e| Error::Schema(e.to_string()))?;
            rows += 1;
            let context = format!("game {} period {} {}", rec.game, rec.period, rec.role);
            if !(1..=N_GAMES).contains(&rec.game) || !(1..=N_PERIODS).contains(&rec.period) {
                return Err(Error::Schema(format!(
                    "{context}: game or period out of range"
                )));
            }
            let role = match rec.role.as_str() {
                "row" => 0,
                "col" => 1,
                other => return Err(Error::Schema(format!("{context}: unknown role {other:?}"))),
            };
            let four = [
                parse_milli(&rec.a1, &context)?,
                parse_milli(&rec.a2, &context)?,
                parse_milli(&rec.a3, &context)?,
                parse_milli(&rec.a4, &context)?,
            ];
            let slot = &mut slots[rec.game - 1][rec.period - 1][role];
            if slot.is_some() {
                return Err(Error::Schema(format!("{context}: duplicate row")));
            }
            *slot = Some(complete(four, &context)?);
        }
        if rows != N_GAMES * N_PERIODS * 2 {
            return Err(Error::Schema(format!(
                "expected {} data rows, found {rows}",
                N_GAMES * N_PERIODS * 2
            )));
        }

        let games = slots.map(|periods| {
            periods.map(|[row, col]| MilliAction {
                row: row.expect("all 16 rows present"),
                col: col.expect("all 16 rows present"),
            })
        });
        Self::from_milli(games, effective_count)
    }

    fn from_milli(
        games: [[MilliAction; N_PERIODS]; N_GAMES],
        effective_count: u32,
    ) -> Result<Self> {
        let mut actions: Vec<[PopulationAction; N_PERIODS]> = Vec::with_capacity(N_GAMES);
        for periods in &games {
            let v = periods
                .iter()
                .map(|m| m.to_action(effective_count))
                .collect::<Result<Vec<_>>>()?;
            actions.push(v.try_into().expect("four periods"));
        }
        Ok(Self {
            games,
            actions: actions.try_into().expect("two games"),
            holdout_period: N_PERIODS,
            label_map: LabelMap::default(),
        })
    }

    pub fn load_str(source: &str, effective_count: u32) -> Result<Self> {
        Self::load(source.as_bytes(), effective_count)
    }

    pub fn load_path(path: &Path, effective_count: u32) -> Result<Self> {
        Self::load(std::fs::File::open(path)?, effective_count)
    }

    /// The bundled Rapoport–Boebel panel.
    pub fn rapoport_boebel(effective_count: u32) -> Self {
        Self::load_str(RAPOPORT_BOEBEL_CSV, effective_count).expect("bundled dataset is valid")
    }

    pub fn with_label_map(mut self, label_map: LabelMap) -> Self {
        self.label_map = label_map;
        self
    }

    /// Observation of table game `game` (1-based) in table period `period` (1-based).
    pub fn table_entry(&self, game: usize, period: usize) -> &PopulationAction {
        &self.actions[game - 1][period - 1]
    }

    /// All four periods of the game run under `policy`, indexed by `t = period − 1`.
    pub fn policy_panel(&self, policy: Policy) -> &[PopulationAction; N_PERIODS] {
        &self.actions[self.label_map.game_of(policy)]
    }

    /// Periods before the holdout, as `(treated, control)`.
    pub fn fitting_slice(&self) -> (Vec<PopulationAction>, Vec<PopulationAction>) {
        let fit = self.holdout_period - 1;
        (
            self.policy_panel(Policy::Treatment)[..fit].to_vec(),
            self.policy_panel(Policy::Control)[..fit].to_vec(),
        )
    }

    /// Revenue contrast in the held-out period.
    pub fn holdout_truth(&self, fee: &FeeVector) -> f64 {
        let t = self.holdout_period - 1;
        revenue(&fee.0, &self.policy_panel(Policy::Treatment)[t])
            - revenue(&fee.0, &self.policy_panel(Policy::Control)[t])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("game,period,role,a1,a2,a3,a4\n");
        for (g, periods) in self.games.iter().enumerate() {
            for (p, m) in periods.iter().enumerate() {
                for (role, freq) in [("row", &m.row), ("col", &m.col)] {
                    let cells: Vec<String> = freq[..4].iter().map(|&x| format_milli(x)).collect();
                    out.push_str(&format!(
                        "{},{},{},{}\n",
                        g + 1,
                        p + 1,
                        role,
                        cells.join(",")
                    ));
                }
            }
        }
        out
    }
}
