//! Scenario configs and the end-to-end pipeline behind the CLI: resolve
//! data sources, run every company's vertical group, run the horizontal
//! tier across companies, score both cohorts, and write the report bundle
//! (report.json, scorecards.csv, transcript.jsonl, metrics.csv).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::warn;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::datagen::{self, GenSpec, StrategyMode};
use crate::domain::{
    align_by_date, load_csv, write_csv, CsvSchema, HierarchyConfig, Participant, ParticipantId,
    Role, Tier, TimeSeriesDataset,
};
use crate::error::{Error, Result};
use crate::forecaster::{self, TrainConfig};
use crate::hfl::{self, SERVER_ID};
use crate::incentive::{self, MemberEval, RewardPools, ScoreCard};
use crate::simnet::{assert_privacy, MessageKind, PrivacyCheck, Simnet, Transcript};
use crate::vfl::{self, VflGroup};

/// Feature schema of a company dataset (and of the CSVs `gen-data` writes).
/// `hdd` is the heating-degree-day transform of temperature, the form in
/// which weather actually drives demand.
pub const COMPANY_FEATURES: [&str; 4] = ["temperature", "hdd", "wind", "usage_lag1"];
/// Feature schema of a station dataset.
pub const STATION_FEATURES: [&str; 1] = ["strategy"];
/// Target column name.
pub const TARGET_NAME: &str = "usage";

const TRUE_STRATEGY_SALT: u64 = 0x7472_7565;

/// Where one participant's data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Generated(GenSpec),
    Csv { path: PathBuf },
}

/// Evaluation window: the held-out suffix every forecast is judged on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalWindow {
    Days(usize),
    Fraction(f64),
}

impl Default for EvalWindow {
    /// The held-out suffix defaults to the last 20% of days.
    fn default() -> Self {
        EvalWindow::Fraction(0.2)
    }
}

impl EvalWindow {
    fn validate(&self) -> Result<()> {
        match self {
            EvalWindow::Days(d) if *d < 2 => Err(Error::Config(format!(
                "evaluation window must cover at least 2 days, got {d}"
            ))),
            EvalWindow::Fraction(f) if !(*f > 0.0 && *f < 1.0) => Err(Error::Config(format!(
                "evaluation fraction must lie in (0, 1), got {f}"
            ))),
            _ => Ok(()),
        }
    }

    fn rows_for(&self, total: usize) -> usize {
        match self {
            EvalWindow::Days(d) => *d,
            EvalWindow::Fraction(f) => ((total as f64) * f).round() as usize,
        }
    }
}

/// Externally supplied score pair, for scenarios that skip training and
/// exercise normalization and allocation alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectedScore {
    pub id: ParticipantId,
    pub quality: f64,
    pub contribution: f64,
}

/// A complete declarative scenario. One JSON document drives data
/// generation, both training tiers, scoring, and reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub hierarchy: HierarchyConfig,
    #[serde(default)]
    pub sources: BTreeMap<ParticipantId, DataSource>,
    pub train: TrainConfig,
    pub hfl_rounds: usize,
    pub vfl_rounds: usize,
    #[serde(default)]
    pub eval_window: EvalWindow,
    /// Pools each company splits over its vertical cohort.
    pub vfl_pools: RewardPools,
    /// When set, training is skipped and these quality/contribution values
    /// go straight into normalization and allocation at the company tier.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub injected_scores: Option<Vec<InjectedScore>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.hierarchy.validate()?;
        self.train.validate()?;
        self.eval_window.validate()?;
        self.vfl_pools.validate()?;
        if self.injected_scores.is_some() {
            return Ok(());
        }
        if self.hfl_rounds == 0 && self.hierarchy.companies.len() > 1 {
            return Err(Error::Config("hfl_rounds must be at least 1".into()));
        }
        if self.vfl_rounds == 0 {
            return Err(Error::Config("vfl_rounds must be at least 1".into()));
        }
        for company in &self.hierarchy.companies {
            self.check_source(company)?;
            for station in self.hierarchy.stations_of(company) {
                self.check_source(station)?;
                if let (Some(DataSource::Generated(c)), Some(DataSource::Generated(s))) =
                    (self.sources.get(company), self.sources.get(station))
                {
                    if c.days != s.days {
                        return Err(Error::Config(format!(
                            "station `{station}` spans {} days but company `{company}` spans {}",
                            s.days, c.days
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn check_source(&self, id: &ParticipantId) -> Result<()> {
        match self.sources.get(id) {
            None => Err(Error::Config(format!(
                "no data source for participant `{id}`"
            ))),
            Some(DataSource::Generated(spec)) => spec.validate(),
            Some(DataSource::Csv { path }) => {
                if path.exists() {
                    Ok(())
                } else {
                    Err(Error::Config(format!(
                        "data file for `{id}` not found: {}",
                        path.display()
                    )))
                }
            }
        }
    }

    /// Per-participant seed: the scenario seed mixed with the participant id
    /// and the participant's own seed offset, so overriding the scenario
    /// seed reseeds every generator while keeping participants distinct.
    fn effective_seed(&self, id: &ParticipantId, spec: &GenSpec) -> u64 {
        self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
            ^ crate::simnet::fingerprint(id.as_str().as_bytes())
            ^ spec.seed
    }
}

/// Load a scenario, making CSV paths absolute relative to the config file.
pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let mut config: ScenarioConfig = serde_json::from_str(&text)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    for source in config.sources.values_mut() {
        if let DataSource::Csv { path } = source {
            if path.is_relative() {
                *path = base.join(&path);
            }
        }
    }
    Ok(config)
}

/// One company's resolved, date-aligned data: the labeled company dataset
/// and each station's committed feature block, full range (not yet split).
#[derive(Debug, Clone)]
pub struct CompanyData {
    pub id: ParticipantId,
    pub dataset: TimeSeriesDataset,
    pub stations: Vec<(ParticipantId, TimeSeriesDataset)>,
}

/// Resolve every participant's dataset, sorted by company id.
pub fn resolve_data(config: &ScenarioConfig) -> Result<Vec<CompanyData>> {
    let mut companies: Vec<ParticipantId> = config.hierarchy.companies.clone();
    companies.sort();
    companies
        .iter()
        .map(|c| resolve_company(config, c))
        .collect()
}

fn resolve_company(config: &ScenarioConfig, company: &ParticipantId) -> Result<CompanyData> {
    let mut station_ids: Vec<ParticipantId> = config.hierarchy.stations_of(company).to_vec();
    station_ids.sort();

    let (company_ds, committed) = match config.sources.get(company) {
        Some(DataSource::Generated(spec)) => generate_company(config, company, spec, &station_ids)?,
        Some(DataSource::Csv { path }) => {
            let schema = CsvSchema::required_target(COMPANY_FEATURES.to_vec(), TARGET_NAME);
            let company_ds = load_csv(path, &schema)?;
            let mut committed = Vec::new();
            for station in &station_ids {
                let Some(DataSource::Csv { path }) = config.sources.get(station) else {
                    return Err(Error::Config(format!(
                        "station `{station}` must use a CSV source when its company does"
                    )));
                };
                let schema = CsvSchema::features_only(STATION_FEATURES.to_vec());
                committed.push(load_csv(path, &schema)?);
            }
            (company_ds, committed)
        }
        None => return Err(Error::Config(format!("no data source for `{company}`"))),
    };

    // One alignment pass puts the company and every station on the exact
    // same dates, whatever the sources were.
    let mut all = vec![company_ds];
    all.extend(committed);
    let aligned = align_by_date(&all)?;
    let mut iter = aligned.into_iter();
    let dataset = iter.next().expect("company dataset present");
    let stations = station_ids.into_iter().zip(iter).collect();
    Ok(CompanyData {
        id: company.clone(),
        dataset,
        stations,
    })
}

/// Generate a company and its stations from specs. The company's usage is
/// driven by the weather and by the stations' *true* strategies; a station
/// in random mode still heats by its true strategy but commits an
/// uncorrelated series instead.
fn generate_company(
    config: &ScenarioConfig,
    company: &ParticipantId,
    spec: &GenSpec,
    station_ids: &[ParticipantId],
) -> Result<(TimeSeriesDataset, Vec<TimeSeriesDataset>)> {
    let company_spec = GenSpec {
        seed: config.effective_seed(company, spec),
        ..spec.clone()
    };
    let weather = datagen::generate_weather(&company_spec)?;

    let mut true_strategies = Vec::new();
    let mut committed = Vec::new();
    for station in station_ids {
        let Some(DataSource::Generated(station_spec)) = config.sources.get(station) else {
            return Err(Error::Config(format!(
                "station `{station}` must use a generated source when its company does"
            )));
        };
        let effective = config.effective_seed(station, station_spec);
        let true_spec = GenSpec {
            seed: effective ^ TRUE_STRATEGY_SALT,
            strategy_mode: StrategyMode::Truthful,
            ..station_spec.clone()
        };
        let true_strategy = datagen::generate_strategy(&true_spec, &weather)?;
        let report = match station_spec.strategy_mode {
            StrategyMode::Truthful => true_strategy.clone(),
            StrategyMode::Random => datagen::generate_strategy(
                &GenSpec {
                    seed: effective,
                    ..station_spec.clone()
                },
                &weather,
            )?,
        };
        true_strategies.push(true_strategy);
        committed.push(report);
    }

    // Demand couples to the mean of the true strategies (zero if the
    // company has no stations).
    let rows = weather.rows();
    let mean_strategy: Vec<f64> = (0..rows)
        .map(|t| {
            if true_strategies.is_empty() {
                0.0
            } else {
                true_strategies
                    .iter()
                    .map(|s| s.features()[[t, 0]])
                    .sum::<f64>()
                    / true_strategies.len() as f64
            }
        })
        .collect();
    let strategy_ds = TimeSeriesDataset::new(
        weather.dates().to_vec(),
        vec!["strategy".into()],
        Array2::from_shape_vec((rows, 1), mean_strategy).expect("shape"),
        None,
    )?;
    let usage = datagen::generate_usage(&company_spec, &weather, &strategy_ds)?;

    // Company features: today's weather (raw and degree-day form) plus
    // yesterday's usage; the first day has no lag and is dropped (alignment
    // trims the stations to match).
    let n = rows - 1;
    let mut features = Array2::zeros((n, 4));
    for t in 0..n {
        let temperature = weather.features()[[t + 1, 0]];
        features[[t, 0]] = temperature;
        features[[t, 1]] = (datagen::HEATING_THRESHOLD_C - temperature).max(0.0);
        features[[t, 2]] = weather.features()[[t + 1, 1]];
        features[[t, 3]] = usage[t];
    }
    let company_ds = TimeSeriesDataset::new(
        weather.dates()[1..].to_vec(),
        COMPANY_FEATURES.iter().map(|s| s.to_string()).collect(),
        features,
        Some(usage[1..].to_vec()),
    )?;
    Ok((company_ds, committed))
}

/// Scorecards of one cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierReport {
    pub scorecards: Vec<ScoreCard>,
}

/// Grand totals paid across every cohort of the scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub paid_data: f64,
    pub paid_model: f64,
}

/// The scenario report: fully self-describing (the resolved config and seed
/// are embedded, so a report can be reproduced from itself).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub scenario: ScenarioConfig,
    pub seed: u64,
    pub hfl: TierReport,
    pub vfl: BTreeMap<ParticipantId, TierReport>,
    pub totals: Totals,
}

impl Report {
    /// Invariant checks every report must satisfy before it is written:
    /// shares of each cohort sum to 1 and payouts conserve the pools.
    pub fn self_check(&self) -> Result<()> {
        let check_cohort = |label: &str, cards: &[ScoreCard], pools: &RewardPools| -> Result<()> {
            if cards.is_empty() {
                return Ok(());
            }
            let q_norm: f64 = cards.iter().map(|c| c.quality_norm).sum();
            let c_norm: f64 = cards.iter().map(|c| c.contribution_norm).sum();
            let paid_q: f64 = cards.iter().map(|c| c.r_quality).sum();
            let paid_c: f64 = cards.iter().map(|c| c.r_contribution).sum();
            if (q_norm - 1.0).abs() > 1e-9 || (c_norm - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "cohort `{label}`: shares sum to {q_norm} / {c_norm}, expected 1"
                )));
            }
            if (paid_q - pools.r_data).abs() > 1e-9 * pools.r_data.max(1.0)
                || (paid_c - pools.r_model).abs() > 1e-9 * pools.r_model.max(1.0)
            {
                return Err(Error::Config(format!(
                    "cohort `{label}`: payout {paid_q} / {paid_c} does not conserve the pools"
                )));
            }
            Ok(())
        };
        let hfl_pools = RewardPools {
            r_data: self.scenario.hierarchy.r_data,
            r_model: self.scenario.hierarchy.r_model,
        };
        check_cohort("hfl", &self.hfl.scorecards, &hfl_pools)?;
        for (company, tier) in &self.vfl {
            check_cohort(company.as_str(), &tier.scorecards, &self.scenario.vfl_pools)?;
        }
        Ok(())
    }
}

/// One row of metrics.csv: a participant's training loss after a round.
/// The participant field is prefixed with the tier (`vfl/acme`, `hfl/acme`)
/// because a company appears in both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub round: usize,
    pub participant: String,
    pub loss: f64,
}

/// Everything a simulation produces, before any file is written.
#[derive(Debug, Clone)]
pub struct SimulateOutcome {
    pub report: Report,
    pub transcript: Transcript,
    pub metrics: Vec<MetricRow>,
}

impl SimulateOutcome {
    /// Run the transcript privacy audit against every fingerprint of the
    /// raw data this outcome's scenario resolved to. A score-injection
    /// scenario has no raw data, so its forbidden set is empty.
    pub fn privacy_check(&self) -> Result<PrivacyCheck> {
        let mut forbidden = std::collections::BTreeSet::new();
        if self.report.scenario.injected_scores.is_none() {
            let companies = resolve_data(&self.report.scenario)?;
            for company in &companies {
                forbidden.extend(crate::simnet::raw_data_fingerprints(&company.dataset));
                for (_, ds) in &company.stations {
                    forbidden.extend(crate::simnet::raw_data_fingerprints(ds));
                }
            }
        }
        Ok(assert_privacy(&self.transcript, &forbidden))
    }
}

/// Run a scenario end to end (no file output): vertical groups first, then
/// the horizontal tier, then scoring at both levels.
pub fn run_scenario(config: &ScenarioConfig) -> Result<SimulateOutcome> {
    run_scenario_with(config, false)
}

/// [`run_scenario`] with full payload retention in the transcript.
pub fn run_scenario_with(
    config: &ScenarioConfig,
    full_transcript: bool,
) -> Result<SimulateOutcome> {
    config.validate()?;
    let mut net = Simnet::with_payload_retention(config.name.clone(), config.seed, full_transcript);
    net.register(SERVER_ID);

    if let Some(scores) = &config.injected_scores {
        let values: Vec<(ParticipantId, f64, f64)> = scores
            .iter()
            .map(|s| (s.id.clone(), s.quality, s.contribution))
            .collect();
        let pools = RewardPools {
            r_data: config.hierarchy.r_data,
            r_model: config.hierarchy.r_model,
        };
        let scorecards = incentive::score_from_values(&values, &pools)?;
        send_score_reports(&mut net, SERVER_ID, &scorecards)?;
        let report = assemble_report(config.clone(), scorecards, BTreeMap::new())?;
        return Ok(SimulateOutcome {
            report,
            transcript: net.into_transcript(),
            metrics: Vec::new(),
        });
    }

    let companies = resolve_data(config)?;
    let mut metrics = Vec::new();
    let mut vfl_reports: BTreeMap<ParticipantId, TierReport> = BTreeMap::new();
    let mut hfl_train: Vec<Participant> = Vec::new();
    let mut hfl_eval: BTreeMap<ParticipantId, TimeSeriesDataset> = BTreeMap::new();

    for company in &companies {
        let split = split_company(config, company)?;
        hfl_train.push(Participant::new(
            company.id.clone(),
            Tier::Company,
            Role::Active,
            split.company_train.clone(),
        )?);
        hfl_eval.insert(company.id.clone(), split.company_eval.clone());

        if !company.stations.is_empty() {
            let tier = run_company_vfl(config, &mut net, company, &split, &mut metrics)?;
            vfl_reports.insert(company.id.clone(), tier);
        }
    }

    let hfl_cards = if companies.len() >= 2 {
        config.hierarchy.validate_for_hfl()?;
        let outcome = hfl::run_hfl(&mut net, &hfl_train, config.hfl_rounds, &config.train)?;
        for log in &outcome.logs {
            for (id, loss) in &log.local_loss {
                metrics.push(MetricRow {
                    round: log.round,
                    participant: format!("hfl/{id}"),
                    loss: *loss,
                });
            }
        }

        let mut members = Vec::new();
        for participant in &hfl_train {
            let id = participant.id().clone();
            let eval = &hfl_eval[&id];
            let train_ds = participant.dataset();
            members.push(MemberEval {
                id: id.clone(),
                quality_features: train_ds.features().to_owned(),
                quality_target: train_ds.target().expect("company holds labels").to_vec(),
                sample_count: Some(participant.sample_count()),
                local_forecast: forecaster::predict(&outcome.locals[&id], eval.features())?,
                global_forecast: forecaster::predict(&outcome.global, eval.features())?,
                actual: eval.target().expect("company holds labels").to_vec(),
            });
        }
        let pools = RewardPools {
            r_data: config.hierarchy.r_data,
            r_model: config.hierarchy.r_model,
        };
        let cards = incentive::evaluate_cohort(&members, &pools)?;
        send_score_reports(&mut net, SERVER_ID, &cards)?;
        cards
    } else {
        Vec::new()
    };

    let report = assemble_report(config.clone(), hfl_cards, vfl_reports)?;
    Ok(SimulateOutcome {
        report,
        transcript: net.into_transcript(),
        metrics,
    })
}

struct CompanySplit {
    company_train: TimeSeriesDataset,
    company_eval: TimeSeriesDataset,
    station_train: Vec<(ParticipantId, TimeSeriesDataset)>,
    station_eval: Vec<(ParticipantId, TimeSeriesDataset)>,
}

fn split_company(config: &ScenarioConfig, company: &CompanyData) -> Result<CompanySplit> {
    let rows = company.dataset.rows();
    let eval_rows = config.eval_window.rows_for(rows);
    if eval_rows < 2 || eval_rows + 2 > rows {
        return Err(Error::Config(format!(
            "company `{}`: evaluation window of {eval_rows} days does not leave at least \
             2 training and 2 evaluation days out of {rows}",
            company.id
        )));
    }
    let (company_train, company_eval) = company.dataset.split_eval_suffix(eval_rows)?;
    let mut station_train = Vec::new();
    let mut station_eval = Vec::new();
    for (id, ds) in &company.stations {
        let (train, eval) = ds.split_eval_suffix(eval_rows)?;
        station_train.push((id.clone(), train));
        station_eval.push((id.clone(), eval));
    }
    Ok(CompanySplit {
        company_train,
        company_eval,
        station_train,
        station_eval,
    })
}

fn run_company_vfl(
    config: &ScenarioConfig,
    net: &mut Simnet,
    company: &CompanyData,
    split: &CompanySplit,
    metrics: &mut Vec<MetricRow>,
) -> Result<TierReport> {
    let active = Participant::new(
        company.id.clone(),
        Tier::Company,
        Role::Active,
        split.company_train.clone(),
    )?;
    let passives: Vec<Participant> = split
        .station_train
        .iter()
        .map(|(id, ds)| Participant::new(id.clone(), Tier::Station, Role::Passive, ds.clone()))
        .collect::<Result<_>>()?;
    let group = VflGroup::new(active, passives)?;

    let outcome = vfl::run_vfl(net, &group, config.vfl_rounds, &config.train)?;
    for log in &outcome.logs {
        metrics.push(MetricRow {
            round: log.round,
            participant: format!("vfl/{}", company.id),
            loss: log.loss,
        });
    }

    // Global forecast: the combined split model over the eval window (one
    // shared sample space, so every member sees the same global forecast).
    let combined = outcome.combined(&group);
    let eval_actual = split
        .company_eval
        .target()
        .expect("labels present")
        .to_vec();
    let mut eval_blocks: Vec<(&ParticipantId, &TimeSeriesDataset)> =
        vec![(&company.id, &split.company_eval)];
    for (id, ds) in &split.station_eval {
        eval_blocks.push((id, ds));
    }
    let concatenated = concat_features(eval_blocks.iter().map(|(_, ds)| *ds))?;
    let global_forecast = forecaster::predict(&combined, concatenated.view())?;

    let train_target = split.company_train.target().expect("labels present");
    let mut members = Vec::new();
    for (id, eval_ds) in &eval_blocks {
        let train_ds = if *id == &company.id {
            &split.company_train
        } else {
            &split
                .station_train
                .iter()
                .find(|(sid, _)| sid == *id)
                .expect("station split exists")
                .1
        };
        members.push(MemberEval {
            id: (*id).clone(),
            quality_features: train_ds.features().to_owned(),
            quality_target: train_target.to_vec(),
            sample_count: None,
            local_forecast: forecaster::predict(
                &outcome.restricted_locals[*id],
                eval_ds.features(),
            )?,
            global_forecast: global_forecast.clone(),
            actual: eval_actual.clone(),
        });
    }
    let cards = incentive::evaluate_cohort(&members, &config.vfl_pools)?;
    send_score_reports(net, company.id.as_str(), &cards)?;
    Ok(TierReport { scorecards: cards })
}

fn concat_features<'a>(
    datasets: impl Iterator<Item = &'a TimeSeriesDataset>,
) -> Result<Array2<f64>> {
    let views: Vec<_> = datasets.map(|ds| ds.features()).collect();
    ndarray::concatenate(ndarray::Axis(1), &views)
        .map_err(|e| Error::Shape(format!("cannot concatenate feature blocks: {e}")))
}

fn send_score_reports(net: &mut Simnet, sender: &str, cards: &[ScoreCard]) -> Result<()> {
    let round = net.advance_round();
    for card in cards {
        if card.participant.as_str() == sender {
            continue;
        }
        net.register(card.participant.as_str());
        net.send(
            sender,
            card.participant.as_str(),
            round,
            MessageKind::ScoreReport,
            &serde_json::to_vec(card)?,
        )?;
    }
    Ok(())
}

fn assemble_report(
    scenario: ScenarioConfig,
    hfl_cards: Vec<ScoreCard>,
    vfl: BTreeMap<ParticipantId, TierReport>,
) -> Result<Report> {
    let mut paid_data = 0.0;
    let mut paid_model = 0.0;
    for card in hfl_cards
        .iter()
        .chain(vfl.values().flat_map(|t| t.scorecards.iter()))
    {
        paid_data += card.r_quality;
        paid_model += card.r_contribution;
    }
    let seed = scenario.seed;
    let report = Report {
        scenario,
        seed,
        hfl: TierReport {
            scorecards: hfl_cards,
        },
        vfl,
        totals: Totals {
            paid_data,
            paid_model,
        },
    };
    report.self_check()?;
    Ok(report)
}

/// Write the full report bundle into `dir`. Returns the report path.
pub fn write_outcome(outcome: &SimulateOutcome, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let report_path = dir.join("report.json");
    let mut report_json = serde_json::to_string_pretty(&outcome.report)?;
    report_json.push('\n');
    std::fs::write(&report_path, report_json)?;
    std::fs::write(dir.join("transcript.jsonl"), outcome.transcript.to_jsonl()?)?;

    let mut writer = csv::Writer::from_path(dir.join("scorecards.csv"))?;
    for card in outcome
        .report
        .vfl
        .values()
        .flat_map(|t| t.scorecards.iter())
        .chain(outcome.report.hfl.scorecards.iter())
    {
        writer.serialize(card)?;
    }
    writer.flush()?;

    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(dir.join("metrics.csv"))?;
    writer.write_record(["round", "participant", "loss"])?;
    for row in &outcome.metrics {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(report_path)
}

/// Options shared by the CLI entry points.
#[derive(Debug, Clone, Default)]
pub struct SimulateOptions {
    pub out_dir: Option<PathBuf>,
    pub seed_override: Option<u64>,
    pub full_transcript: bool,
}

/// `simulate` subcommand: load, run, self-check, write. Returns the report
/// path.
pub fn cmd_simulate(config_path: &Path, options: &SimulateOptions) -> Result<PathBuf> {
    let mut config = load_config(config_path)?;
    if let Some(seed) = options.seed_override {
        config.seed = seed;
    }
    let out_dir = options
        .out_dir
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(&config.name));
    let outcome = run_scenario_with(&config, options.full_transcript)?;
    write_outcome(&outcome, &out_dir)
}

/// `gen-data` subcommand: write every generated participant dataset as CSV
/// plus a manifest. All specs are validated before the first file is
/// written. Returns the manifest path.
pub fn cmd_gen_data(config_path: &Path, out_dir: &Path) -> Result<PathBuf> {
    let config = load_config(config_path)?;
    config.validate()?;
    if config.injected_scores.is_some() {
        return Err(Error::Config(
            "scenario injects scores directly and has no data to generate".into(),
        ));
    }
    let companies = resolve_data(&config)?;

    std::fs::create_dir_all(out_dir)?;
    #[derive(Serialize)]
    struct ManifestEntry {
        participant: ParticipantId,
        file: String,
        rows: usize,
        seed: u64,
    }
    #[derive(Serialize)]
    struct Manifest {
        scenario: String,
        seed: u64,
        files: Vec<ManifestEntry>,
    }

    let seed_of = |id: &ParticipantId| -> u64 {
        match config.sources.get(id) {
            Some(DataSource::Generated(spec)) => spec.seed,
            _ => 0,
        }
    };
    let mut files = Vec::new();
    for company in &companies {
        if !matches!(
            config.sources.get(&company.id),
            Some(DataSource::Generated(_))
        ) {
            warn!(
                "participant `{}` uses a CSV source; nothing to generate",
                company.id
            );
            continue;
        }
        let file = format!("{}.csv", company.id);
        let mut buf = Vec::new();
        write_csv(&company.dataset, Some(TARGET_NAME), &mut buf)?;
        std::fs::write(out_dir.join(&file), buf)?;
        files.push(ManifestEntry {
            participant: company.id.clone(),
            file,
            rows: company.dataset.rows(),
            seed: seed_of(&company.id),
        });
        for (id, ds) in &company.stations {
            let file = format!("{id}.csv");
            let mut buf = Vec::new();
            write_csv(ds, None, &mut buf)?;
            std::fs::write(out_dir.join(&file), buf)?;
            files.push(ManifestEntry {
                participant: id.clone(),
                file,
                rows: ds.rows(),
                seed: seed_of(id),
            });
        }
    }
    files.sort_by(|a, b| a.participant.cmp(&b.participant));
    let manifest = Manifest {
        scenario: config.name.clone(),
        seed: config.seed,
        files,
    };
    let manifest_path = out_dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(&manifest_path, text)?;
    Ok(manifest_path)
}

/// Report produced by the `evaluate` subcommand: normalization and
/// allocation over externally supplied scores, no training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub scorecards: Vec<ScoreCard>,
    pub totals: Totals,
}

/// `evaluate` subcommand: read `participant,quality,contribution` rows and
/// split the pools accordingly.
pub fn cmd_evaluate(scores_path: &Path, pools: &RewardPools) -> Result<EvaluationReport> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(scores_path)?;
    let headers = reader.headers()?.clone();
    let expected = ["participant", "quality", "contribution"];
    if headers.iter().take(3).ne(expected) {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "expected header `participant,quality,contribution`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if record.len() < 3 {
            return Err(Error::Parse {
                line,
                message: format!("expected 3 fields, got {}", record.len()),
            });
        }
        let parse = |field: usize, name: &str| -> Result<f64> {
            record[field].trim().parse().map_err(|_| Error::Parse {
                line,
                message: format!("unparseable {name} `{}`", &record[field]),
            })
        };
        values.push((
            ParticipantId::new(record[0].trim()),
            parse(1, "quality")?,
            parse(2, "contribution")?,
        ));
    }
    if values.is_empty() {
        return Err(Error::Parse {
            line: 2,
            message: "score file has no rows".into(),
        });
    }
    let scorecards = incentive::score_from_values(&values, pools)?;
    let totals = Totals {
        paid_data: scorecards.iter().map(|c| c.r_quality).sum(),
        paid_model: scorecards.iter().map(|c| c.r_contribution).sum(),
    };
    Ok(EvaluationReport { scorecards, totals })
}

/// `report` subcommand: load an existing report and render a summary.
pub fn cmd_report(report_path: &Path) -> Result<String> {
    let text = std::fs::read_to_string(report_path)?;
    let report: Report = serde_json::from_str(&text)?;
    let mut out = String::new();
    out.push_str(&format!(
        "scenario `{}` (seed {})\n",
        report.scenario.name, report.seed
    ));
    let render = |out: &mut String, label: &str, cards: &[ScoreCard]| {
        if cards.is_empty() {
            return;
        }
        out.push_str(&format!("\n[{label}]\n"));
        out.push_str(
            "participant      quality  q-share  contrib  c-share  r_quality  r_contribution\n",
        );
        for c in cards {
            out.push_str(&format!(
                "{:<16} {:>7.4} {:>8.4} {:>8.4} {:>8.4} {:>10.4} {:>15.4}\n",
                c.participant.as_str(),
                c.quality,
                c.quality_norm,
                c.contribution,
                c.contribution_norm,
                c.r_quality,
                c.r_contribution,
            ));
        }
    };
    render(&mut out, "company tier", &report.hfl.scorecards);
    for (company, tier) in &report.vfl {
        render(
            &mut out,
            &format!("stations of {company}"),
            &tier.scorecards,
        );
    }
    out.push_str(&format!(
        "\ntotal paid: {:.4} (data) + {:.4} (model)\n",
        report.totals.paid_data, report.totals.paid_model
    ));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(companies: usize, stations_per_company: usize, days: usize) -> ScenarioConfig {
        let mut hierarchy = HierarchyConfig {
            companies: Vec::new(),
            stations_by_company: BTreeMap::new(),
            r_data: 100.0,
            r_model: 100.0,
        };
        let mut sources = BTreeMap::new();
        for c in 0..companies {
            let cid = ParticipantId::new(format!("company-{c}"));
            hierarchy.companies.push(cid.clone());
            sources.insert(
                cid.clone(),
                DataSource::Generated(GenSpec {
                    seed: c as u64,
                    days,
                    base_usage: 50.0,
                    temp_sensitivity: 2.0,
                    strategy_mode: StrategyMode::Truthful,
                    noise_std: 3.0,
                }),
            );
            let mut stations = Vec::new();
            for s in 0..stations_per_company {
                let sid = ParticipantId::new(format!("station-{c}-{s}"));
                sources.insert(
                    sid.clone(),
                    DataSource::Generated(GenSpec {
                        seed: (10 + s) as u64,
                        days,
                        base_usage: 50.0,
                        temp_sensitivity: 2.0,
                        strategy_mode: if s % 2 == 0 {
                            StrategyMode::Truthful
                        } else {
                            StrategyMode::Random
                        },
                        noise_std: 3.0,
                    }),
                );
                stations.push(sid);
            }
            hierarchy.stations_by_company.insert(cid, stations);
        }
        ScenarioConfig {
            name: "tiny".into(),
            seed: 7,
            hierarchy,
            sources,
            train: TrainConfig {
                learning_rate: 0.1,
                epochs: 3,
                l2: 0.001,
                seed: 0,
                standardize: true,
            },
            hfl_rounds: 10,
            vfl_rounds: 10,
            eval_window: EvalWindow::Fraction(0.2),
            vfl_pools: RewardPools {
                r_data: 10.0,
                r_model: 10.0,
            },
            injected_scores: None,
            output_dir: None,
        }
    }

    #[test]
    fn validation_catches_day_mismatch_and_bad_windows() {
        let mut config = tiny_config(1, 1, 60);
        let station = ParticipantId::new("station-0-0");
        if let Some(DataSource::Generated(spec)) = config.sources.get_mut(&station) {
            spec.days = 50;
        }
        assert!(matches!(config.validate(), Err(Error::Config(_))));

        let mut config = tiny_config(1, 1, 60);
        config.eval_window = EvalWindow::Days(1);
        assert!(matches!(config.validate(), Err(Error::Config(_))));
        config.eval_window = EvalWindow::Fraction(1.5);
        assert!(matches!(config.validate(), Err(Error::Config(_))));

        // A window that swallows the whole dataset fails at split time.
        let mut config = tiny_config(1, 1, 60);
        config.eval_window = EvalWindow::Days(59);
        assert!(matches!(run_scenario(&config), Err(Error::Config(_))));
    }

    #[test]
    fn resolved_data_is_aligned_and_labeled() {
        let config = tiny_config(1, 2, 60);
        let companies = resolve_data(&config).unwrap();
        assert_eq!(companies.len(), 1);
        let company = &companies[0];
        assert!(company.dataset.has_target());
        assert_eq!(company.dataset.rows(), 59); // lag drops the first day
        for (_, station) in &company.stations {
            assert_eq!(station.dates(), company.dataset.dates());
            assert!(!station.has_target());
        }
    }

    #[test]
    fn resolution_is_deterministic_and_seed_sensitive() {
        let config = tiny_config(2, 1, 40);
        let a = resolve_data(&config).unwrap();
        let b = resolve_data(&config).unwrap();
        assert_eq!(a.len(), b.len());
        assert_eq!(a[0].dataset, b[0].dataset);

        let mut reseeded = config.clone();
        reseeded.seed = 8;
        let c = resolve_data(&reseeded).unwrap();
        assert_ne!(a[0].dataset, c[0].dataset);
    }

    #[test]
    fn scenario_runs_both_tiers() {
        let config = tiny_config(2, 2, 60);
        let outcome = run_scenario(&config).unwrap();
        assert_eq!(outcome.report.hfl.scorecards.len(), 2);
        assert_eq!(outcome.report.vfl.len(), 2);
        for tier in outcome.report.vfl.values() {
            assert_eq!(tier.scorecards.len(), 3); // company + 2 stations
        }
        assert!(outcome.report.self_check().is_ok());
        assert!(!outcome.transcript.messages.is_empty());
        assert!(!outcome.metrics.is_empty());
    }

    #[test]
    fn single_company_scenario_skips_the_horizontal_tier() {
        let config = tiny_config(1, 2, 60);
        let outcome = run_scenario(&config).unwrap();
        assert!(outcome.report.hfl.scorecards.is_empty());
        assert_eq!(outcome.report.vfl.len(), 1);
    }

    #[test]
    fn runs_are_reproducible() {
        let config = tiny_config(2, 1, 50);
        let a = run_scenario(&config).unwrap();
        let b = run_scenario(&config).unwrap();
        assert_eq!(
            serde_json::to_string(&a.report).unwrap(),
            serde_json::to_string(&b.report).unwrap()
        );
        assert_eq!(a.transcript, b.transcript);
    }

    #[test]
    fn privacy_audit_passes_on_honest_runs() {
        let config = tiny_config(1, 2, 50);
        let outcome = run_scenario(&config).unwrap();
        let check = outcome.privacy_check().unwrap();
        assert!(check.passed, "offending: {:?}", check.offending_seqs);
    }

    #[test]
    fn injected_scores_reproduce_published_ratios() {
        let mut config = tiny_config(2, 0, 10);
        config.sources.clear();
        config.injected_scores = Some(vec![
            InjectedScore {
                id: "A".into(),
                quality: 0.0459,
                contribution: 0.0251,
            },
            InjectedScore {
                id: "B".into(),
                quality: 0.8443,
                contribution: 0.1112,
            },
        ]);
        config.hierarchy.companies = vec!["A".into(), "B".into()];
        config.hierarchy.stations_by_company.clear();
        let outcome = run_scenario(&config).unwrap();
        let cards = &outcome.report.hfl.scorecards;
        assert!((cards[0].quality_norm - 0.0516).abs() < 5e-3);
        assert!((cards[0].contribution_norm - 0.1844).abs() < 5e-3);
        assert!((cards[1].quality_norm - 0.9484).abs() < 5e-3);
        assert!((cards[1].contribution_norm - 0.8156).abs() < 5e-3);
    }

    #[test]
    fn gen_data_then_simulate_from_csv_matches_generated_run() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(1, 1, 50);

        // Write the config, generate CSVs, then rebuild a CSV-backed config.
        let config_path = dir.path().join("scenario.json");
        std::fs::write(&config_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
        let data_dir = dir.path().join("data");
        cmd_gen_data(&config_path, &data_dir).unwrap();

        let mut csv_config = config.clone();
        for (id, source) in csv_config.sources.iter_mut() {
            *source = DataSource::Csv {
                path: data_dir.join(format!("{id}.csv")),
            };
        }
        let generated = run_scenario(&config).unwrap();
        let from_csv = run_scenario(&csv_config).unwrap();
        assert_eq!(
            serde_json::to_string(&generated.report.vfl).unwrap(),
            serde_json::to_string(&from_csv.report.vfl).unwrap()
        );
    }
}
