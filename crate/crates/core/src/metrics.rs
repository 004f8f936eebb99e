//! Per-task records, aggregate reports and their CSV encodings.
//!
//! Aggregates are exact integer sums. The two fractional columns
//! (`avg_wait_ms`, `load_cov`) are rounded half-up to three decimals with
//! integer arithmetic, so the CSV bytes do not depend on float formatting.

use std::io::{self, Write};

use thiserror::Error;

use crate::policies::PolicyId;
use crate::workload::Cloudlet;
use crate::{CloudletId, Millis, UserId, VmId};

pub const DEFAULT_STARVATION_THRESHOLD_MS: Millis = 300_000;

pub const TASK_CSV_HEADER: &str =
    "cloudlet_id,user_id,vm_id,priority,length_mi,arrival_ms,start_ms,finish_ms,wait_ms,turnaround_ms";
pub const COMPARISON_CSV_HEADER: &str =
    "policy,n_tasks,avg_wait_ms,max_wait_ms,makespan_ms,load_cov,starved_count";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("no task records; report undefined")]
    EmptyRecords,
    #[error("no vm loads given")]
    EmptyLoads,
    #[error("mean vm load is zero")]
    ZeroMeanLoad,
    #[error("arithmetic overflow computing load balance")]
    Overflow,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskRecord {
    pub cloudlet_id: CloudletId,
    pub user_id: UserId,
    pub vm_id: VmId,
    pub priority: u32,
    pub length_mi: u64,
    pub arrival_ms: Millis,
    pub start_ms: Millis,
    pub finish_ms: Millis,
    pub wait_ms: Millis,
    pub turnaround_ms: Millis,
}

impl TaskRecord {
    pub fn new(c: &Cloudlet, vm_id: VmId, start_ms: Millis, finish_ms: Millis) -> Self {
        debug_assert!(c.arrival_ms <= start_ms && start_ms <= finish_ms);
        Self {
            cloudlet_id: c.cloudlet_id,
            user_id: c.user_id,
            vm_id,
            priority: c.priority,
            length_mi: c.length_mi,
            arrival_ms: c.arrival_ms,
            start_ms,
            finish_ms,
            wait_ms: start_ms - c.arrival_ms,
            turnaround_ms: finish_ms - c.arrival_ms,
        }
    }

    pub fn exec_ms(&self) -> Millis {
        self.finish_ms - self.start_ms
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub policy: PolicyId,
    pub n_tasks: u64,
    /// Exact sum of waits; `avg_wait_ms() * n_tasks == total_wait_ms`.
    pub total_wait_ms: u128,
    pub max_wait_ms: Millis,
    pub makespan_ms: Millis,
    pub load_cov: f64,
    /// `load_cov` rounded half-up to thousandths.
    pub load_cov_milli: u64,
    pub starvation_threshold_ms: Millis,
    pub starved_count: u64,
    pub per_vm_busy_ms: Vec<Millis>,
}

impl MetricsReport {
    pub fn avg_wait_ms(&self) -> f64 {
        self.total_wait_ms as f64 / self.n_tasks as f64
    }

    /// Average wait in thousandths of a millisecond, rounded half-up.
    pub fn avg_wait_milli(&self) -> u128 {
        round_half_up_milli(self.total_wait_ms, u128::from(self.n_tasks))
    }

    pub fn avg_wait_fixed3(&self) -> String {
        fixed3(self.avg_wait_milli())
    }

    pub fn load_cov_fixed3(&self) -> String {
        fixed3(u128::from(self.load_cov_milli))
    }

    /// One comparison-CSV row, without trailing newline.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.policy,
            self.n_tasks,
            self.avg_wait_fixed3(),
            self.max_wait_ms,
            self.makespan_ms,
            self.load_cov_fixed3(),
            self.starved_count
        )
    }
}

/// `round_half_up(1000 * num / den)`.
fn round_half_up_milli(num: u128, den: u128) -> u128 {
    (2000 * num + den) / (2 * den)
}

fn fixed3(milli: u128) -> String {
    format!("{}.{:03}", milli / 1000, milli % 1000)
}

pub fn compute_report(
    records: &[TaskRecord],
    vm_busy_ms: &[Millis],
    policy: PolicyId,
    threshold_ms: Millis,
) -> Result<MetricsReport, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyRecords);
    }
    let total_wait_ms = records.iter().map(|r| u128::from(r.wait_ms)).sum();
    let max_wait_ms = records.iter().map(|r| r.wait_ms).max().unwrap_or(0);
    let first_arrival = records.iter().map(|r| r.arrival_ms).min().unwrap_or(0);
    let last_finish = records.iter().map(|r| r.finish_ms).max().unwrap_or(0);
    Ok(MetricsReport {
        policy,
        n_tasks: records.len() as u64,
        total_wait_ms,
        max_wait_ms,
        makespan_ms: last_finish - first_arrival,
        load_cov: load_cov(vm_busy_ms)?,
        load_cov_milli: load_cov_milli(vm_busy_ms)?,
        starvation_threshold_ms: threshold_ms,
        starved_count: starved_count(records, threshold_ms),
        per_vm_busy_ms: vm_busy_ms.to_vec(),
    })
}

/// `(n, S, n * sum(x^2) - S^2)`; the coefficient of variation is `sqrt(N) / S`.
fn dispersion(loads: &[Millis]) -> Result<(u128, u128, u128), MetricsError> {
    if loads.is_empty() {
        return Err(MetricsError::EmptyLoads);
    }
    let n = loads.len() as u128;
    let mut sum: u128 = 0;
    let mut sum_sq: u128 = 0;
    for &x in loads {
        let x = u128::from(x);
        sum += x;
        sum_sq = sum_sq
            .checked_add(x.checked_mul(x).ok_or(MetricsError::Overflow)?)
            .ok_or(MetricsError::Overflow)?;
    }
    if sum == 0 {
        return Err(MetricsError::ZeroMeanLoad);
    }
    let spread = n
        .checked_mul(sum_sq)
        .ok_or(MetricsError::Overflow)?
        .checked_sub(sum * sum)
        .ok_or(MetricsError::Overflow)?;
    Ok((n, sum, spread))
}

/// Coefficient of variation of per-VM busy time (population standard
/// deviation over mean).
pub fn load_cov(per_vm_busy_ms: &[Millis]) -> Result<f64, MetricsError> {
    let (_, sum, spread) = dispersion(per_vm_busy_ms)?;
    Ok((spread as f64).sqrt() / sum as f64)
}

/// [`load_cov`] times 1000, rounded half-up, computed exactly.
pub fn load_cov_milli(per_vm_busy_ms: &[Millis]) -> Result<u64, MetricsError> {
    let (_, sum, spread) = dispersion(per_vm_busy_ms)?;
    if spread == 0 {
        return Ok(0);
    }
    // Largest k with k <= 1000 * sqrt(spread) / sum + 1/2, i.e.
    // sum * (2k - 1) <= 2000 * sqrt(spread).
    let rhs = spread
        .checked_mul(4_000_000)
        .ok_or(MetricsError::Overflow)?;
    let fits = |k: u128| -> Result<bool, MetricsError> {
        if k == 0 {
            return Ok(true);
        }
        let lhs = sum
            .checked_mul(2 * k - 1)
            .and_then(|v| v.checked_mul(v))
            .ok_or(MetricsError::Overflow)?;
        Ok(lhs <= rhs)
    };
    let estimate = (1000.0 * (spread as f64).sqrt() / sum as f64 + 0.5).floor();
    let mut k = estimate.max(0.0) as u128;
    while k > 0 && !fits(k)? {
        k -= 1;
    }
    while fits(k + 1)? {
        k += 1;
    }
    u64::try_from(k).map_err(|_| MetricsError::Overflow)
}

/// Number of records whose wait strictly exceeds `threshold_ms`.
pub fn starved_count(records: &[TaskRecord], threshold_ms: Millis) -> u64 {
    records.iter().filter(|r| r.wait_ms > threshold_ms).count() as u64
}

/// Per-task CSV, rows sorted by `cloudlet_id`.
pub fn write_task_csv<W: Write>(mut w: W, records: &[TaskRecord]) -> io::Result<()> {
    let mut rows: Vec<&TaskRecord> = records.iter().collect();
    rows.sort_by_key(|r| r.cloudlet_id);
    writeln!(w, "{TASK_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.cloudlet_id,
            r.user_id,
            r.vm_id,
            r.priority,
            r.length_mi,
            r.arrival_ms,
            r.start_ms,
            r.finish_ms,
            r.wait_ms,
            r.turnaround_ms
        )?;
    }
    Ok(())
}

/// Comparison CSV, one row per report in the fixed policy order.
pub fn write_comparison_csv<W: Write>(mut w: W, reports: &[MetricsReport]) -> io::Result<()> {
    let mut rows: Vec<&MetricsReport> = reports.iter().collect();
    rows.sort_by_key(|r| r.policy);
    writeln!(w, "{COMPARISON_CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.csv_row())?;
    }
    Ok(())
}
