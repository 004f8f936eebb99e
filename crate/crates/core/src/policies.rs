//! Scheduling policies and VM assignment.
//!
//! Every policy is a lexicographic argmin over a key that ends in
//! `cloudlet_id`, so selection is total and independent of iteration order:
//!
//! | policy   | key                                                   |
//! |----------|-------------------------------------------------------|
//! | FCFS     | `(arrival, id)`                                       |
//! | SJF      | `(length, arrival, id)`                               |
//! | Priority | `(priority, arrival, id)`                             |
//! | Hybrid   | `(aged priority, length, arrival, id)`                |
//!
//! Priority 0 is the most urgent. The hybrid rule ages a waiting task's
//! priority down by one level per elapsed aging quantum, so any task reaches
//! level 0 after at most `priority * quantum` ms and from then on only
//! competes on length.
//!
//! The `select_*` functions are the reference definitions. [`ReadyQueue`] is
//! the incremental structure the engine drives; it must pick exactly what the
//! matching `select_*` function would pick.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap};
use std::fmt;
use std::num::NonZeroU64;
use std::str::FromStr;

use thiserror::Error;

use crate::entities::VmState;
use crate::{CloudletId, Millis, UserId, VmId};

pub const DEFAULT_AGING_QUANTUM_MS: u64 = 20_000;
pub const DEFAULT_PRIORITY_LEVELS: u32 = 8;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PolicyError {
    #[error("unknown policy: {0}")]
    UnknownPolicy(String),
    #[error("no idle vm to assign")]
    NoIdleVm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PolicyId {
    Fcfs,
    Sjf,
    Priority,
    Hybrid,
}

impl PolicyId {
    /// Fixed reporting order.
    pub const ALL: [PolicyId; 4] = [
        PolicyId::Fcfs,
        PolicyId::Sjf,
        PolicyId::Priority,
        PolicyId::Hybrid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyId::Fcfs => "fcfs",
            PolicyId::Sjf => "sjf",
            PolicyId::Priority => "priority",
            PolicyId::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for PolicyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyId {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyId::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| PolicyError::UnknownPolicy(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgingQuantum {
    Finite(NonZeroU64),
    /// Aging disabled.
    Infinite,
}

impl AgingQuantum {
    pub fn millis(ms: u64) -> Option<Self> {
        NonZeroU64::new(ms).map(AgingQuantum::Finite)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HybridParams {
    pub aging_quantum: AgingQuantum,
    pub priority_levels: u32,
}

impl Default for HybridParams {
    fn default() -> Self {
        Self {
            aging_quantum: AgingQuantum::millis(DEFAULT_AGING_QUANTUM_MS).unwrap(),
            priority_levels: DEFAULT_PRIORITY_LEVELS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Policy {
    Fcfs,
    Sjf,
    Priority,
    Hybrid(HybridParams),
}

impl Policy {
    pub fn new(id: PolicyId, hybrid: HybridParams) -> Self {
        match id {
            PolicyId::Fcfs => Policy::Fcfs,
            PolicyId::Sjf => Policy::Sjf,
            PolicyId::Priority => Policy::Priority,
            PolicyId::Hybrid => Policy::Hybrid(hybrid),
        }
    }

    pub fn id(&self) -> PolicyId {
        match self {
            Policy::Fcfs => PolicyId::Fcfs,
            Policy::Sjf => PolicyId::Sjf,
            Policy::Priority => PolicyId::Priority,
            Policy::Hybrid(_) => PolicyId::Hybrid,
        }
    }

    /// Reference selection over an unordered ready set.
    pub fn select(&self, ready: &[ReadyTask], now_ms: Millis) -> Option<CloudletId> {
        match self {
            Policy::Fcfs => select_fcfs(ready),
            Policy::Sjf => select_sjf(ready),
            Policy::Priority => select_priority(ready),
            Policy::Hybrid(p) => select_hybrid(ready, now_ms, p),
        }
    }
}

/// A cloudlet that has arrived and not yet started.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReadyTask {
    pub cloudlet_id: CloudletId,
    pub arrival_ms: Millis,
    pub length_mi: u64,
    pub priority: u32,
    pub user_id: UserId,
}

/// `max(0, priority - floor((now - arrival) / quantum))`.
pub fn effective_priority(
    priority: u32,
    arrival_ms: Millis,
    now_ms: Millis,
    quantum: AgingQuantum,
) -> u32 {
    match quantum {
        AgingQuantum::Infinite => priority,
        AgingQuantum::Finite(q) => {
            let steps = now_ms.saturating_sub(arrival_ms) / q.get();
            u64::from(priority).saturating_sub(steps) as u32
        }
    }
}

pub fn select_fcfs(ready: &[ReadyTask]) -> Option<CloudletId> {
    ready
        .iter()
        .min_by_key(|t| (t.arrival_ms, t.cloudlet_id))
        .map(|t| t.cloudlet_id)
}

pub fn select_sjf(ready: &[ReadyTask]) -> Option<CloudletId> {
    ready
        .iter()
        .min_by_key(|t| (t.length_mi, t.arrival_ms, t.cloudlet_id))
        .map(|t| t.cloudlet_id)
}

pub fn select_priority(ready: &[ReadyTask]) -> Option<CloudletId> {
    ready
        .iter()
        .min_by_key(|t| (t.priority, t.arrival_ms, t.cloudlet_id))
        .map(|t| t.cloudlet_id)
}

pub fn select_hybrid(
    ready: &[ReadyTask],
    now_ms: Millis,
    params: &HybridParams,
) -> Option<CloudletId> {
    ready
        .iter()
        .min_by_key(|t| {
            (
                effective_priority(t.priority, t.arrival_ms, now_ms, params.aging_quantum),
                t.length_mi,
                t.arrival_ms,
                t.cloudlet_id,
            )
        })
        .map(|t| t.cloudlet_id)
}

/// Least-loaded assignment: minimal `(total_busy_ms, vm_id)` among idle VMs.
pub fn assign_vm<'a>(idle: impl IntoIterator<Item = &'a VmState>) -> Result<VmId, PolicyError> {
    idle.into_iter()
        .min_by_key(|vm| (vm.total_busy_ms, vm.id()))
        .map(VmState::id)
        .ok_or(PolicyError::NoIdleVm)
}

/// Idle VMs ordered for least-loaded assignment.
#[derive(Debug, Clone, Default)]
pub struct IdlePool {
    idle: BTreeSet<(Millis, VmId)>,
}

impl IdlePool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, vm: &VmState) {
        self.idle.insert((vm.total_busy_ms, vm.id()));
    }

    /// Removes and returns the least-loaded idle VM.
    pub fn take(&mut self) -> Option<VmId> {
        self.idle.pop_first().map(|(_, id)| id)
    }

    pub fn is_empty(&self) -> bool {
        self.idle.is_empty()
    }

    pub fn len(&self) -> usize {
        self.idle.len()
    }
}

/// Incremental ready set for one policy.
#[derive(Debug, Clone)]
pub struct ReadyQueue {
    inner: Inner,
}

#[derive(Debug, Clone)]
enum Inner {
    Fixed {
        policy: PolicyId,
        heap: BinaryHeap<Reverse<(u64, u64, CloudletId)>>,
    },
    Aging(AgingQueue),
}

impl ReadyQueue {
    pub fn new(policy: &Policy) -> Self {
        let inner = match policy {
            Policy::Hybrid(params) => Inner::Aging(AgingQueue::new(params.aging_quantum)),
            other => Inner::Fixed {
                policy: other.id(),
                heap: BinaryHeap::new(),
            },
        };
        Self { inner }
    }

    /// Adds a task at time `now_ms` (normally its arrival time).
    pub fn push(&mut self, task: ReadyTask, now_ms: Millis) {
        match &mut self.inner {
            Inner::Fixed { policy, heap } => {
                let t = task;
                let key = match policy {
                    PolicyId::Fcfs => (t.arrival_ms, 0, t.cloudlet_id),
                    PolicyId::Sjf => (t.length_mi, t.arrival_ms, t.cloudlet_id),
                    PolicyId::Priority => (u64::from(t.priority), t.arrival_ms, t.cloudlet_id),
                    PolicyId::Hybrid => unreachable!("hybrid uses the aging queue"),
                };
                heap.push(Reverse(key));
            }
            Inner::Aging(q) => q.push(task, now_ms),
        }
    }

    /// Removes and returns the task the policy would select at `now_ms`.
    ///
    /// For the hybrid policy `now_ms` must be nondecreasing across calls.
    pub fn pop_next(&mut self, now_ms: Millis) -> Option<CloudletId> {
        match &mut self.inner {
            Inner::Fixed { heap, .. } => heap.pop().map(|Reverse((_, _, id))| id),
            Inner::Aging(q) => q.pop_next(now_ms),
        }
    }

    pub fn len(&self) -> usize {
        match &self.inner {
            Inner::Fixed { heap, .. } => heap.len(),
            Inner::Aging(q) => q.tasks.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy)]
struct AgingSlot {
    priority: u32,
    level: u32,
    length_mi: u64,
    arrival_ms: Millis,
}

/// Tasks bucketed by current effective priority. A promotion heap moves a
/// task down one or more levels when its next aging boundary
/// (`arrival + k * quantum`) is reached, so each task moves at most
/// `priority` times over its whole wait.
#[derive(Debug, Clone)]
struct AgingQueue {
    quantum: AgingQuantum,
    levels: Vec<BTreeSet<(u64, Millis, CloudletId)>>,
    tasks: HashMap<CloudletId, AgingSlot>,
    promotions: BinaryHeap<Reverse<(Millis, CloudletId)>>,
}

impl AgingQueue {
    fn new(quantum: AgingQuantum) -> Self {
        Self {
            quantum,
            levels: Vec::new(),
            tasks: HashMap::new(),
            promotions: BinaryHeap::new(),
        }
    }

    fn bucket(&mut self, level: u32) -> &mut BTreeSet<(u64, Millis, CloudletId)> {
        let level = level as usize;
        if self.levels.len() <= level {
            self.levels.resize_with(level + 1, BTreeSet::new);
        }
        &mut self.levels[level]
    }

    /// Time at which a task currently at `level` drops to `level - 1`.
    fn next_boundary(&self, slot: &AgingSlot) -> Option<Millis> {
        match self.quantum {
            AgingQuantum::Finite(q) if slot.level > 0 => {
                let steps = u64::from(slot.priority - slot.level) + 1;
                steps
                    .checked_mul(q.get())
                    .and_then(|d| slot.arrival_ms.checked_add(d))
            }
            _ => None,
        }
    }

    fn push(&mut self, t: ReadyTask, now_ms: Millis) {
        let slot = AgingSlot {
            priority: t.priority,
            level: effective_priority(t.priority, t.arrival_ms, now_ms, self.quantum),
            length_mi: t.length_mi,
            arrival_ms: t.arrival_ms,
        };
        self.bucket(slot.level)
            .insert((t.length_mi, t.arrival_ms, t.cloudlet_id));
        if let Some(at) = self.next_boundary(&slot) {
            self.promotions.push(Reverse((at, t.cloudlet_id)));
        }
        self.tasks.insert(t.cloudlet_id, slot);
    }

    fn advance(&mut self, now_ms: Millis) {
        while let Some(&Reverse((at, id))) = self.promotions.peek() {
            if at > now_ms {
                break;
            }
            self.promotions.pop();
            // Entries for tasks already dispatched are dropped lazily.
            let Some(mut slot) = self.tasks.get(&id).copied() else {
                continue;
            };
            let level = effective_priority(slot.priority, slot.arrival_ms, now_ms, self.quantum);
            if level >= slot.level {
                continue;
            }
            let key = (slot.length_mi, slot.arrival_ms, id);
            self.bucket(slot.level).remove(&key);
            self.bucket(level).insert(key);
            slot.level = level;
            self.tasks.insert(id, slot);
            if let Some(next) = self.next_boundary(&slot) {
                self.promotions.push(Reverse((next, id)));
            }
        }
    }

    fn pop_next(&mut self, now_ms: Millis) -> Option<CloudletId> {
        self.advance(now_ms);
        let (_, _, id) = self.levels.iter_mut().find_map(|b| b.pop_first())?;
        self.tasks.remove(&id);
        Some(id)
    }
}
