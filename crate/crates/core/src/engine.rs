//! Discrete-event core.
//!
//! Events are ordered by `(time_ms, seq)` where `seq` is a per-run insertion
//! counter, so simultaneous events are handled FIFO. The loop drains every
//! event that shares the current timestamp, then runs one dispatch phase: while
//! a VM is idle and the ready set is nonempty, the policy picks a cloudlet,
//! the least-loaded idle VM takes it, a blockchain lease is bound, and the
//! completion event is scheduled. Execution is non-preemptive.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::entities::{exec_duration, EntityError, World};
use crate::metrics::TaskRecord;
use crate::policies::{IdlePool, Policy, PolicyId, ReadyQueue, ReadyTask};
use crate::workload::Cloudlet;
use crate::{CloudletId, LeaseId, Millis, VmId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EngineError {
    #[error("event at {at} ms scheduled before current clock {clock} ms")]
    Causality { at: Millis, clock: Millis },
    #[error(transparent)]
    Entity(#[from] EntityError),
    #[error("invalid workload: {0}")]
    InvalidWorkload(String),
    #[error("entity handshake incomplete before first dispatch")]
    HandshakeIncomplete,
    #[error("vm {0} is not idle at run start")]
    VmNotIdle(VmId),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    CloudletArrival(CloudletId),
    CloudletCompletion {
        cloudlet_id: CloudletId,
        vm_id: VmId,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub time_ms: Millis,
    pub seq: u64,
    pub kind: EventKind,
}

// seq is unique per queue, so (time_ms, seq) is a total order on events.
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.time_ms, self.seq).cmp(&(other.time_ms, other.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Min-queue of events that also owns the simulation clock.
#[derive(Debug, Clone, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Reverse<Event>>,
    next_seq: u64,
    clock_ms: Millis,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    /// Schedules `kind` at `time_ms`, assigning the next sequence number.
    pub fn push(&mut self, time_ms: Millis, kind: EventKind) -> Result<Event, EngineError> {
        if time_ms < self.clock_ms {
            return Err(EngineError::Causality {
                at: time_ms,
                clock: self.clock_ms,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        let ev = Event { time_ms, seq, kind };
        self.heap.push(Reverse(ev));
        Ok(ev)
    }

    /// Removes the minimal `(time_ms, seq)` event and advances the clock to it.
    pub fn pop_next(&mut self) -> Option<Event> {
        let Reverse(ev) = self.heap.pop()?;
        self.clock_ms = ev.time_ms;
        Some(ev)
    }

    pub fn peek_time(&self) -> Option<Millis> {
        self.heap.peek().map(|Reverse(e)| e.time_ms)
    }

    pub fn clock(&self) -> Millis {
        self.clock_ms
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
struct Running {
    start_ms: Millis,
    vm_id: VmId,
    lease_id: LeaseId,
}

/// Result of a finished run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub policy: PolicyId,
    /// One record per cloudlet, sorted by `cloudlet_id`.
    pub records: Vec<TaskRecord>,
    /// Cloudlet ids in the order they were dispatched.
    pub dispatch_order: Vec<CloudletId>,
    pub clock_ms: Millis,
    pub events_processed: u64,
    pub world: World,
}

impl RunOutcome {
    /// Accumulated busy time per VM, in pool order.
    pub fn vm_busy_ms(&self) -> Vec<Millis> {
        self.world.vms().iter().map(|v| v.total_busy_ms).collect()
    }
}

/// One simulation: an entity world, a policy and a finite workload.
///
/// Single-threaded; independent runs share nothing and can be moved to other
/// threads.
#[derive(Debug)]
pub struct SimulationRun {
    world: World,
    policy: Policy,
    queue: EventQueue,
    ready: ReadyQueue,
    idle: IdlePool,
    cloudlets: Vec<Cloudlet>,
    running: Vec<Option<Running>>,
    records: Vec<Option<TaskRecord>>,
    dispatch_order: Vec<CloudletId>,
    events_processed: u64,
}

impl SimulationRun {
    /// Prepares a run and enqueues one arrival event per cloudlet in
    /// `(arrival_ms, cloudlet_id)` order. Cloudlet ids must be `0..n`.
    pub fn new(world: World, policy: Policy, workload: &[Cloudlet]) -> Result<Self, EngineError> {
        if !world.handshake_complete() {
            return Err(EngineError::HandshakeIncomplete);
        }
        let mut idle = IdlePool::new();
        for vm in world.vms() {
            if !vm.is_idle() {
                return Err(EngineError::VmNotIdle(vm.id()));
            }
            idle.insert(vm);
        }

        let n = workload.len();
        let mut by_id: Vec<Option<Cloudlet>> = vec![None; n];
        for c in workload {
            let slot = usize::try_from(c.cloudlet_id)
                .ok()
                .filter(|&i| i < n)
                .ok_or_else(|| {
                    EngineError::InvalidWorkload(format!(
                        "cloudlet id {} outside 0..{n}",
                        c.cloudlet_id
                    ))
                })?;
            if by_id[slot].replace(c.clone()).is_some() {
                return Err(EngineError::InvalidWorkload(format!(
                    "duplicate cloudlet id {}",
                    c.cloudlet_id
                )));
            }
        }
        let cloudlets: Vec<Cloudlet> = by_id.into_iter().map(Option::unwrap).collect();

        let mut order: Vec<&Cloudlet> = cloudlets.iter().collect();
        order.sort_by_key(|c| (c.arrival_ms, c.cloudlet_id));
        let mut queue = EventQueue::new();
        for c in order {
            queue.push(c.arrival_ms, EventKind::CloudletArrival(c.cloudlet_id))?;
        }

        Ok(Self {
            world,
            ready: ReadyQueue::new(&policy),
            policy,
            queue,
            idle,
            running: vec![None; n],
            records: vec![None; n],
            dispatch_order: Vec::with_capacity(n),
            cloudlets,
            events_processed: 0,
        })
    }

    pub fn run(mut self) -> Result<RunOutcome, EngineError> {
        while let Some(ev) = self.queue.pop_next() {
            self.handle(ev)?;
            while self.queue.peek_time() == Some(self.queue.clock()) {
                let ev = self.queue.pop_next().expect("peeked");
                self.handle(ev)?;
            }
            self.dispatch()?;
        }
        self.finish()
    }

    fn handle(&mut self, ev: Event) -> Result<(), EngineError> {
        self.events_processed += 1;
        let now = ev.time_ms;
        match ev.kind {
            EventKind::CloudletArrival(id) => {
                let c = &self.cloudlets[id as usize];
                self.ready.push(
                    ReadyTask {
                        cloudlet_id: c.cloudlet_id,
                        arrival_ms: c.arrival_ms,
                        length_mi: c.length_mi,
                        priority: c.priority,
                        user_id: c.user_id,
                    },
                    now,
                );
            }
            EventKind::CloudletCompletion { cloudlet_id, vm_id } => {
                let run = self.running[cloudlet_id as usize].take().ok_or_else(|| {
                    EngineError::Invariant(format!("completion of idle cloudlet {cloudlet_id}"))
                })?;
                let vm = self.world.vm_mut(vm_id)?;
                if vm.current_cloudlet != Some(cloudlet_id) || run.vm_id != vm_id {
                    return Err(EngineError::Invariant(format!(
                        "vm {vm_id} is not running cloudlet {cloudlet_id}"
                    )));
                }
                vm.current_cloudlet = None;
                vm.busy_until_ms = 0;
                self.idle.insert(vm);
                self.world.release_lease(run.lease_id, now)?;
                let c = &self.cloudlets[cloudlet_id as usize];
                self.records[cloudlet_id as usize] =
                    Some(TaskRecord::new(c, vm_id, run.start_ms, now));
            }
        }
        Ok(())
    }

    fn dispatch(&mut self) -> Result<(), EngineError> {
        let now = self.queue.clock();
        while !self.idle.is_empty() && !self.ready.is_empty() {
            let id = self.ready.pop_next(now).expect("ready set nonempty");
            let vm_id = self.idle.take().expect("idle pool nonempty");
            let c = &self.cloudlets[id as usize];
            let user_id = c.user_id;
            let vm = self.world.vm_mut(vm_id)?;
            let duration = exec_duration(c, &vm.spec)?;
            vm.current_cloudlet = Some(id);
            vm.busy_until_ms = now + duration;
            vm.total_busy_ms += duration;
            let chain = self.world.chain_for(id);
            let lease_id = self.world.acquire_lease(user_id, id, vm_id, chain, now)?;
            self.queue.push(
                now + duration,
                EventKind::CloudletCompletion {
                    cloudlet_id: id,
                    vm_id,
                },
            )?;
            self.running[id as usize] = Some(Running {
                start_ms: now,
                vm_id,
                lease_id,
            });
            self.dispatch_order.push(id);
        }
        Ok(())
    }

    fn finish(self) -> Result<RunOutcome, EngineError> {
        if !self.ready.is_empty() {
            return Err(EngineError::Invariant("ready set not empty at end".into()));
        }
        if let Some(vm) = self.world.vms().iter().find(|v| !v.is_idle()) {
            return Err(EngineError::Invariant(format!(
                "vm {} busy at end",
                vm.id()
            )));
        }
        let leases = self.world.leases();
        if leases.active_count() != 0 || leases.acquired_count() != self.cloudlets.len() {
            return Err(EngineError::Invariant(format!(
                "lease imbalance: {} acquired, {} released, {} cloudlets",
                leases.acquired_count(),
                leases.released_count(),
                self.cloudlets.len()
            )));
        }
        let records = self
            .records
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                r.ok_or_else(|| EngineError::Invariant(format!("cloudlet {i} never completed")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(RunOutcome {
            policy: self.policy.id(),
            records,
            dispatch_order: self.dispatch_order,
            clock_ms: self.queue.clock(),
            events_processed: self.events_processed,
            world: self.world,
        })
    }
}
