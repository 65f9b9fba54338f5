use std::collections::HashMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDate, NaiveTime, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{
    ConsumerId, DemandReward, EnergyRequest, EnergyService, Location, Mah, MicrocellDemand,
    ProviderId, RequestId, RewardModel, ServiceId, TimeSlot, DEFAULT_MAX_CANDIDATE_SLOTS,
};

use super::WorkloadError;

const TRANSACTIONS: &str = "transactions";
const ENERGY: &str = "energy";

/// Header names in the transactions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransactionColumns {
    pub consumer_id: String,
    pub date: String,
    pub time: String,
    pub x: String,
    pub y: String,
    pub shop_id: String,
}

impl Default for TransactionColumns {
    fn default() -> Self {
        Self {
            consumer_id: "consumer_id".into(),
            date: "date".into(),
            time: "time".into(),
            x: "x".into(),
            y: "y".into(),
            shop_id: "shop_id".into(),
        }
    }
}

/// Header names in the energy-transfer file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyColumns {
    pub provider_id: String,
    pub consumer_id: String,
    pub date: String,
    pub time: String,
    pub amount_mah: String,
    /// Transfer duration in minutes.
    pub duration: String,
}

impl Default for EnergyColumns {
    fn default() -> Self {
        Self {
            provider_id: "provider_id".into(),
            consumer_id: "consumer_id".into(),
            date: "date".into(),
            time: "time".into(),
            amount_mah: "amount_mah".into(),
            duration: "duration".into(),
        }
    }
}

/// How transaction rows become slots, requests and services.
///
/// Each kept transaction is a visitor of the microcell. A seeded draw makes it
/// a provider with probability `provider_share`, otherwise a consumer. Amount
/// and stay duration come from a uniformly drawn row of the energy file. A
/// consumer files one request in the slot of its timestamp; a provider
/// registers for every slot its stay overlaps, up to `max_candidate_slots`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MappingConfig {
    pub transactions: TransactionColumns,
    pub energy: EnergyColumns,
    pub interval_start: DateTime<Utc>,
    pub num_slots: usize,
    pub slot_duration_minutes: i64,
    pub date_format: String,
    pub time_format: String,
    /// Keep only rows of this shop when set.
    pub shop_id: Option<String>,
    pub provider_share: f64,
    pub max_candidate_slots: usize,
    pub seed: u64,
}

impl Default for MappingConfig {
    fn default() -> Self {
        Self {
            transactions: TransactionColumns::default(),
            energy: EnergyColumns::default(),
            interval_start: Utc.with_ymd_and_hms(2021, 4, 8, 9, 0, 0).unwrap(),
            num_slots: 6,
            slot_duration_minutes: 60,
            date_format: "%Y-%m-%d".into(),
            time_format: "%H:%M:%S".into(),
            shop_id: None,
            provider_share: 0.0,
            max_candidate_slots: DEFAULT_MAX_CANDIDATE_SLOTS,
            seed: 0,
        }
    }
}

/// Row accounting of an ingestion run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub transactions_read: usize,
    pub dropped_outside_interval: usize,
    pub dropped_other_shop: usize,
    /// Providers whose stay only covered slots without any consumer.
    pub dropped_services: usize,
    /// Slot buckets without requests, omitted from the instance.
    pub empty_buckets: usize,
}

struct Table {
    headers: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read(file: &'static str, reader: impl Read) -> Result<Self, WorkloadError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|source| WorkloadError::Csv { file, source })?
            .iter()
            .map(str::to_owned)
            .collect();
        if headers.iter().all(|h| h.is_empty()) {
            return Err(WorkloadError::EmptyFile { file });
        }
        let rows = rdr
            .records()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|source| WorkloadError::Csv { file, source })?;
        if rows.is_empty() {
            return Err(WorkloadError::EmptyFile { file });
        }
        Ok(Self { headers, rows })
    }

    fn column(&self, file: &'static str, name: &str) -> Result<usize, WorkloadError> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| WorkloadError::MissingColumn {
                file,
                column: name.to_owned(),
            })
    }
}

fn parse<T: std::str::FromStr>(
    file: &'static str,
    row: usize,
    column: &str,
    raw: &str,
) -> Result<T, WorkloadError>
where
    T::Err: std::fmt::Display,
{
    raw.parse().map_err(|e: T::Err| WorkloadError::BadValue {
        file,
        row,
        column: column.to_owned(),
        message: format!("`{raw}`: {e}"),
    })
}

fn timestamp(
    file: &'static str,
    row: usize,
    (date_col, date): (&str, &str),
    (time_col, time): (&str, &str),
    cfg: &MappingConfig,
) -> Result<DateTime<Utc>, WorkloadError> {
    let bad = |column: &str, raw: &str, e: chrono::ParseError| WorkloadError::BadValue {
        file,
        row,
        column: column.to_owned(),
        message: format!("`{raw}`: {e}"),
    };
    let d = NaiveDate::parse_from_str(date, &cfg.date_format).map_err(|e| bad(date_col, date, e))?;
    let t = NaiveTime::parse_from_str(time, &cfg.time_format).map_err(|e| bad(time_col, time, e))?;
    Ok(Utc.from_utc_datetime(&d.and_time(t)))
}

struct EnergyDraw {
    amount_mah: Mah,
    duration_minutes: f64,
}

fn read_energy(reader: impl Read, cfg: &MappingConfig) -> Result<Vec<EnergyDraw>, WorkloadError> {
    let table = Table::read(ENERGY, reader)?;
    let c = &cfg.energy;
    for name in [&c.provider_id, &c.consumer_id, &c.date, &c.time] {
        table.column(ENERGY, name)?;
    }
    let amount = table.column(ENERGY, &c.amount_mah)?;
    let duration = table.column(ENERGY, &c.duration)?;
    let date = table.column(ENERGY, &c.date)?;
    let time = table.column(ENERGY, &c.time)?;
    table
        .rows
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            let row = i + 2;
            timestamp(ENERGY, row, (&c.date, &rec[date]), (&c.time, &rec[time]), cfg)?;
            let amount_mah: Mah = parse(ENERGY, row, &c.amount_mah, &rec[amount])?;
            if amount_mah == 0 {
                return Err(WorkloadError::BadValue {
                    file: ENERGY,
                    row,
                    column: c.amount_mah.clone(),
                    message: "amount must be positive".into(),
                });
            }
            let duration_minutes: f64 = parse(ENERGY, row, &c.duration, &rec[duration])?;
            if !(duration_minutes >= 0.0 && duration_minutes.is_finite()) {
                return Err(WorkloadError::BadValue {
                    file: ENERGY,
                    row,
                    column: c.duration.clone(),
                    message: "duration must be a non-negative number of minutes".into(),
                });
            }
            Ok(EnergyDraw {
                amount_mah,
                duration_minutes,
            })
        })
        .collect()
}

/// Builds an instance from a transactions CSV and an energy-transfer CSV.
/// Row numbers in errors count the header as row 1.
pub fn ingest_transactions(
    transactions_csv: impl Read,
    energy_csv: impl Read,
    cfg: &MappingConfig,
) -> Result<(MicrocellDemand, Vec<EnergyService>, IngestReport), WorkloadError> {
    if cfg.num_slots == 0 || cfg.slot_duration_minutes <= 0 {
        return Err(WorkloadError::Parameter("mapping needs positive slot count and duration".into()));
    }
    if !(0.0..=1.0).contains(&cfg.provider_share) {
        return Err(WorkloadError::Parameter("provider_share must lie in [0, 1]".into()));
    }
    if cfg.max_candidate_slots == 0 {
        return Err(WorkloadError::Parameter("max_candidate_slots must be positive".into()));
    }
    let draws = read_energy(energy_csv, cfg)?;
    let table = Table::read(TRANSACTIONS, transactions_csv)?;
    let c = &cfg.transactions;
    let consumer = table.column(TRANSACTIONS, &c.consumer_id)?;
    let date = table.column(TRANSACTIONS, &c.date)?;
    let time = table.column(TRANSACTIONS, &c.time)?;
    let x = table.column(TRANSACTIONS, &c.x)?;
    let y = table.column(TRANSACTIONS, &c.y)?;
    let shop = table.column(TRANSACTIONS, &c.shop_id)?;

    let slot_len = Duration::minutes(cfg.slot_duration_minutes);
    let interval_end = cfg.interval_start + slot_len * cfg.num_slots as i32;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = IngestReport {
        transactions_read: table.rows.len(),
        ..IngestReport::default()
    };

    let mut consumer_ids: HashMap<String, u32> = HashMap::new();
    let mut buckets: Vec<Vec<EnergyRequest>> = vec![Vec::new(); cfg.num_slots];
    // (amount, location, bucket span)
    let mut providers: Vec<(Mah, Location, Vec<usize>)> = Vec::new();
    let mut next_request = 0u32;

    for (i, rec) in table.rows.iter().enumerate() {
        let row = i + 2;
        let at = timestamp(TRANSACTIONS, row, (&c.date, &rec[date]), (&c.time, &rec[time]), cfg)?;
        let location = Location {
            x: parse(TRANSACTIONS, row, &c.x, &rec[x])?,
            y: parse(TRANSACTIONS, row, &c.y, &rec[y])?,
        };
        if cfg.shop_id.as_deref().is_some_and(|s| s != &rec[shop]) {
            report.dropped_other_shop += 1;
            continue;
        }
        if at < cfg.interval_start || at >= interval_end {
            report.dropped_outside_interval += 1;
            continue;
        }
        let bucket = ((at - cfg.interval_start).num_seconds() / slot_len.num_seconds()) as usize;
        let is_provider = rng.gen::<f64>() < cfg.provider_share;
        let draw = &draws[rng.gen_range(0..draws.len())];

        if is_provider {
            let leave = at + Duration::seconds((draw.duration_minutes * 60.0).round() as i64);
            let last = if leave >= interval_end {
                cfg.num_slots - 1
            } else {
                ((leave - cfg.interval_start).num_seconds() / slot_len.num_seconds()) as usize
            };
            let span = (bucket..=last).take(cfg.max_candidate_slots).collect();
            providers.push((draw.amount_mah, location, span));
        } else {
            let next_id = consumer_ids.len() as u32;
            let cid = *consumer_ids.entry(rec[consumer].to_owned()).or_insert(next_id);
            buckets[bucket].push(EnergyRequest {
                request_id: RequestId(next_request),
                consumer_id: ConsumerId(cid),
                amount_mah: draw.amount_mah,
                slot_index: bucket,
                location,
            });
            next_request += 1;
        }
    }

    // keep only buckets with demand, renumbered chronologically
    let mut remap = vec![None; cfg.num_slots];
    let mut slots = Vec::new();
    for (b, reqs) in buckets.into_iter().enumerate() {
        if reqs.is_empty() {
            report.empty_buckets += 1;
            continue;
        }
        let index = slots.len();
        remap[b] = Some(index);
        let start = cfg.interval_start + slot_len * b as i32;
        let reqs = reqs
            .into_iter()
            .map(|r| EnergyRequest { slot_index: index, ..r })
            .collect();
        let mut slot = TimeSlot::new(index, start, start + slot_len, 0.0, reqs);
        slot.reward = DemandReward.reward(slot.required_energy_mah, slot.consumer_count);
        slots.push(slot);
    }

    let mut services = Vec::new();
    for (amount_mah, location, span) in providers {
        let candidate_slots: Vec<usize> = span.iter().filter_map(|&b| remap[b]).collect();
        if candidate_slots.is_empty() {
            report.dropped_services += 1;
            continue;
        }
        let id = services.len() as u32;
        services.push(EnergyService {
            service_id: ServiceId(id),
            provider_id: ProviderId(id),
            amount_mah,
            candidate_slots,
            location,
        });
    }

    Ok((MicrocellDemand::new(slots, &services), services, report))
}

pub fn ingest_transactions_files(
    transactions: &Path,
    energy: &Path,
    cfg: &MappingConfig,
) -> Result<(MicrocellDemand, Vec<EnergyService>, IngestReport), WorkloadError> {
    ingest_transactions(File::open(transactions)?, File::open(energy)?, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::validate_instance;

    const ENERGY_CSV: &str = "provider_id,consumer_id,date,time,amount_mah,duration\n\
        p1,c1,2021-01-03,10:00:00,400,30\n\
        p2,c2,2021-01-03,11:00:00,900,95\n\
        p3,c3,2021-01-04,12:30:00,250,10\n";

    fn tx(rows: &[&str]) -> String {
        let mut s = String::from("consumer_id,date,time,x,y,shop_id\n");
        for r in rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }

    #[test]
    fn minimal_file_two_buckets() {
        let t = tx(&[
            "c1,2021-04-08,09:15:00,1.0,2.0,8",
            "c2,2021-04-08,09:45:00,3.0,4.0,8",
            "c3,2021-04-08,11:05:00,5.0,6.0,8",
        ]);
        let (d, s, report) =
            ingest_transactions(t.as_bytes(), ENERGY_CSV.as_bytes(), &MappingConfig::default()).unwrap();
        assert_eq!(d.slots.len(), 2);
        assert_eq!(d.request_count(), 3);
        assert!(s.is_empty());
        assert_eq!(report.empty_buckets, 4);
        assert!(validate_instance(&d, &s).is_valid());
        assert_eq!(d.slots[1].start, Utc.with_ymd_and_hms(2021, 4, 8, 11, 0, 0).unwrap());
    }

    #[test]
    fn rows_outside_interval_are_counted() {
        let t = tx(&[
            "c1,2021-04-08,08:59:59,0,0,8",
            "c2,2021-04-08,09:00:00,0,0,8",
            "c3,2021-04-08,15:00:00,0,0,8",
            "c4,2021-04-08,10:00:00,0,0,3",
        ]);
        let cfg = MappingConfig { shop_id: Some("8".into()), ..MappingConfig::default() };
        let (d, _, report) = ingest_transactions(t.as_bytes(), ENERGY_CSV.as_bytes(), &cfg).unwrap();
        assert_eq!(d.request_count(), 1);
        assert_eq!(report.dropped_outside_interval, 2);
        assert_eq!(report.dropped_other_shop, 1);
    }

    #[test]
    fn providers_cover_their_stay() {
        let rows: Vec<String> = (0..40)
            .map(|i| format!("c{i},2021-04-08,{:02}:{:02}:00,0,0,8", 9 + i / 8, (i * 7) % 60))
            .collect();
        let rows: Vec<&str> = rows.iter().map(String::as_str).collect();
        let cfg = MappingConfig { provider_share: 0.4, seed: 3, ..MappingConfig::default() };
        let (d, s, report) = ingest_transactions(tx(&rows).as_bytes(), ENERGY_CSV.as_bytes(), &cfg).unwrap();
        assert!(!s.is_empty());
        assert_eq!(d.request_count() + s.len() + report.dropped_services, 40);
        assert!(validate_instance(&d, &s).is_valid());
        assert!(s.iter().all(|s| [400, 900, 250].contains(&s.amount_mah)));
    }

    #[test]
    fn seeded_draws_are_reproducible() {
        let rows: Vec<String> = (0..30).map(|i| format!("c{i},2021-04-08,10:{:02}:00,0,0,8", i)).collect();
        let rows: Vec<&str> = rows.iter().map(String::as_str).collect();
        let t = tx(&rows);
        let cfg = MappingConfig { provider_share: 0.3, seed: 17, ..MappingConfig::default() };
        let a = ingest_transactions(t.as_bytes(), ENERGY_CSV.as_bytes(), &cfg).unwrap();
        let b = ingest_transactions(t.as_bytes(), ENERGY_CSV.as_bytes(), &cfg).unwrap();
        assert_eq!((a.0, a.1), (b.0, b.1));
    }

    #[test]
    fn ingestion_errors_name_the_culprit() {
        let missing = "consumer_id,date,time,x,y\nc1,2021-04-08,09:00:00,0,0\n";
        match ingest_transactions(missing.as_bytes(), ENERGY_CSV.as_bytes(), &MappingConfig::default()) {
            Err(WorkloadError::MissingColumn { file: "transactions", column }) => assert_eq!(column, "shop_id"),
            other => panic!("{other:?}"),
        }
        let bad_time = tx(&["c1,2021-04-08,9h,0,0,8"]);
        match ingest_transactions(bad_time.as_bytes(), ENERGY_CSV.as_bytes(), &MappingConfig::default()) {
            Err(WorkloadError::BadValue { row: 2, column, .. }) => assert_eq!(column, "time"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            ingest_transactions("".as_bytes(), ENERGY_CSV.as_bytes(), &MappingConfig::default()),
            Err(WorkloadError::EmptyFile { file: "transactions" })
        ));
        let header_only = "provider_id,consumer_id,date,time,amount_mah,duration\n";
        assert!(matches!(
            ingest_transactions(tx(&[]).as_bytes(), header_only.as_bytes(), &MappingConfig::default()),
            Err(WorkloadError::EmptyFile { file: "energy" })
        ));
    }
}
