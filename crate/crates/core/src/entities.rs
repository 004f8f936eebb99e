//! The simulated component world: datacenters hosting VMs, the Cloud Info
//! Service (CIS) registry, the broker, and the BaaS layer that prepares
//! virtual blockchains and binds one lease per running cloudlet.
//!
//! Blockchains are bookkeeping only. A lease records which user, cloudlet,
//! VM and chain were bound together and for how long.

use std::collections::{BTreeMap, HashMap, HashSet};

use thiserror::Error;

use crate::workload::Cloudlet;
use crate::{ChainId, CloudletId, DcId, LeaseId, Millis, UserId, VmId};

pub const DEFAULT_VM_MIPS: u64 = 250;
pub const DEFAULT_VM_PES: u32 = 1;
pub const DEFAULT_VM_RAM_MB: u64 = 512;
pub const DEFAULT_VM_BANDWIDTH: u64 = 1000;
pub const DEFAULT_VM_IMAGE_SIZE_MB: u64 = 10_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EntityError {
    #[error("datacenter {0} is already registered")]
    DuplicateDatacenter(DcId),
    #[error("unknown datacenter {0}")]
    UnknownDatacenter(DcId),
    #[error("datacenter {0} hosts no VMs")]
    EmptyDatacenter(DcId),
    #[error("duplicate vm id {0}")]
    DuplicateVm(VmId),
    #[error("unknown vm {0}")]
    UnknownVm(VmId),
    #[error("vm {0}: {1}")]
    InvalidVm(VmId, &'static str),
    #[error("unknown chain {0}")]
    UnknownChain(ChainId),
    #[error("no blockchains prepared")]
    NoChains,
    #[error("cloudlet {0} already holds an active lease")]
    DoubleLease(CloudletId),
    #[error("unknown lease {0}")]
    UnknownLease(LeaseId),
    #[error("lease {0} already released")]
    AlreadyReleased(LeaseId),
    #[error("lease {lease} released at {at} before it was acquired at {acquired}")]
    ReleaseBeforeAcquire {
        lease: LeaseId,
        acquired: Millis,
        at: Millis,
    },
    #[error("cloudlet length must be ≥ 1")]
    ZeroLength,
    #[error("vm mips must be ≥ 1")]
    ZeroMips,
    #[error("pes must be ≥ 1")]
    ZeroPes,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VmSpec {
    pub vm_id: VmId,
    pub mips: u64,
    pub pes: u32,
    pub ram_mb: u64,
    pub bandwidth: u64,
    pub image_size_mb: u64,
}

impl VmSpec {
    /// A VM with the default hardware profile (250 MIPS, 1 PE, 512 MB RAM,
    /// bandwidth 1000, 10000 MB image).
    pub fn with_id(vm_id: VmId) -> Self {
        Self {
            vm_id,
            mips: DEFAULT_VM_MIPS,
            pes: DEFAULT_VM_PES,
            ram_mb: DEFAULT_VM_RAM_MB,
            bandwidth: DEFAULT_VM_BANDWIDTH,
            image_size_mb: DEFAULT_VM_IMAGE_SIZE_MB,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatacenterSpec {
    pub dc_id: DcId,
    pub vm_specs: Vec<VmSpec>,
}

/// Runtime state of one VM.
///
/// `total_busy_ms` is charged when a cloudlet starts, so it always equals the
/// summed execution time of everything the VM has completed or is running.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VmState {
    pub spec: VmSpec,
    pub busy_until_ms: Millis,
    pub total_busy_ms: Millis,
    pub current_cloudlet: Option<CloudletId>,
}

impl VmState {
    pub fn new(spec: VmSpec) -> Self {
        Self {
            spec,
            busy_until_ms: 0,
            total_busy_ms: 0,
            current_cloudlet: None,
        }
    }

    pub fn id(&self) -> VmId {
        self.spec.vm_id
    }

    pub fn is_idle(&self) -> bool {
        self.current_cloudlet.is_none()
    }
}

/// Execution time of `cloudlet` on a VM, in whole milliseconds (rounded up).
///
/// `ceil(length_mi * 1000 / (mips * min(cloudlet.pes, vm.pes)))`
pub fn exec_duration(cloudlet: &Cloudlet, vm: &VmSpec) -> Result<Millis, EntityError> {
    if cloudlet.length_mi == 0 {
        return Err(EntityError::ZeroLength);
    }
    if vm.mips == 0 {
        return Err(EntityError::ZeroMips);
    }
    if cloudlet.pes == 0 || vm.pes == 0 {
        return Err(EntityError::ZeroPes);
    }
    let pes = u128::from(cloudlet.pes.min(vm.pes));
    let work = u128::from(cloudlet.length_mi) * 1000;
    let rate = u128::from(vm.mips) * pes;
    Ok(work.div_ceil(rate) as Millis)
}

/// Cloud Info Service: where datacenters register and virtual chains live.
#[derive(Debug, Clone, Default)]
pub struct CisRegistry {
    datacenters: BTreeMap<DcId, DatacenterSpec>,
    chains: Vec<ChainId>,
}

impl CisRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_datacenter(&mut self, dc: DatacenterSpec) -> Result<(), EntityError> {
        if self.datacenters.contains_key(&dc.dc_id) {
            return Err(EntityError::DuplicateDatacenter(dc.dc_id));
        }
        if dc.vm_specs.is_empty() {
            return Err(EntityError::EmptyDatacenter(dc.dc_id));
        }
        let mut ids = HashSet::new();
        for vm in &dc.vm_specs {
            if !ids.insert(vm.vm_id) {
                return Err(EntityError::DuplicateVm(vm.vm_id));
            }
            if vm.mips == 0 {
                return Err(EntityError::InvalidVm(vm.vm_id, "mips must be ≥ 1"));
            }
            if vm.pes == 0 {
                return Err(EntityError::InvalidVm(vm.vm_id, "pes must be ≥ 1"));
            }
        }
        self.datacenters.insert(dc.dc_id, dc);
        Ok(())
    }

    /// Allocates `count` fresh chain ids, consecutive after any existing ones.
    pub fn prepare_blockchains(&mut self, count: u64) -> Vec<ChainId> {
        let start = self.chains.len() as ChainId;
        let fresh: Vec<ChainId> = (start..start + count).collect();
        self.chains.extend_from_slice(&fresh);
        fresh
    }

    pub fn dc_characteristics(&self, dc_id: DcId) -> Result<&DatacenterSpec, EntityError> {
        self.datacenters
            .get(&dc_id)
            .ok_or(EntityError::UnknownDatacenter(dc_id))
    }

    pub fn datacenter_ids(&self) -> impl Iterator<Item = DcId> + '_ {
        self.datacenters.keys().copied()
    }

    pub fn chains(&self) -> &[ChainId] {
        &self.chains
    }

    pub fn has_chain(&self, chain_id: ChainId) -> bool {
        // Chain ids are allocated densely from 0.
        chain_id < self.chains.len() as ChainId
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockchainLease {
    pub lease_id: LeaseId,
    pub user_id: UserId,
    pub cloudlet_id: CloudletId,
    pub vm_id: VmId,
    pub chain_id: ChainId,
    pub acquired_ms: Millis,
    pub released_ms: Option<Millis>,
}

impl BlockchainLease {
    pub fn is_active(&self) -> bool {
        self.released_ms.is_none()
    }
}

/// Issued leases, with at most one active lease per cloudlet.
#[derive(Debug, Clone, Default)]
pub struct LeaseRegistry {
    leases: Vec<BlockchainLease>,
    active: HashMap<CloudletId, LeaseId>,
}

impl LeaseRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn acquire(
        &mut self,
        cis: &CisRegistry,
        user_id: UserId,
        cloudlet_id: CloudletId,
        vm_id: VmId,
        chain_id: ChainId,
        now_ms: Millis,
    ) -> Result<&BlockchainLease, EntityError> {
        if !cis.has_chain(chain_id) {
            return Err(EntityError::UnknownChain(chain_id));
        }
        if self.active.contains_key(&cloudlet_id) {
            return Err(EntityError::DoubleLease(cloudlet_id));
        }
        let lease_id = self.leases.len() as LeaseId;
        self.active.insert(cloudlet_id, lease_id);
        self.leases.push(BlockchainLease {
            lease_id,
            user_id,
            cloudlet_id,
            vm_id,
            chain_id,
            acquired_ms: now_ms,
            released_ms: None,
        });
        Ok(&self.leases[lease_id as usize])
    }

    pub fn release(&mut self, lease_id: LeaseId, now_ms: Millis) -> Result<(), EntityError> {
        let lease = usize::try_from(lease_id)
            .ok()
            .and_then(|i| self.leases.get_mut(i))
            .ok_or(EntityError::UnknownLease(lease_id))?;
        if lease.released_ms.is_some() {
            return Err(EntityError::AlreadyReleased(lease_id));
        }
        if now_ms < lease.acquired_ms {
            return Err(EntityError::ReleaseBeforeAcquire {
                lease: lease_id,
                acquired: lease.acquired_ms,
                at: now_ms,
            });
        }
        lease.released_ms = Some(now_ms);
        self.active.remove(&lease.cloudlet_id);
        Ok(())
    }

    pub fn get(&self, lease_id: LeaseId) -> Option<&BlockchainLease> {
        usize::try_from(lease_id)
            .ok()
            .and_then(|i| self.leases.get(i))
    }

    pub fn active_for(&self, cloudlet_id: CloudletId) -> Option<LeaseId> {
        self.active.get(&cloudlet_id).copied()
    }

    pub fn all(&self) -> &[BlockchainLease] {
        &self.leases
    }

    pub fn acquired_count(&self) -> usize {
        self.leases.len()
    }

    pub fn active_count(&self) -> usize {
        self.active.len()
    }

    pub fn released_count(&self) -> usize {
        self.leases.len() - self.active.len()
    }
}

/// Setup steps, in the order they must happen before any dispatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HandshakeStep {
    /// Broker asks the datacenter layer for resources.
    BrokerRequest,
    DatacenterRegistered(DcId),
    BlockchainsPrepared {
        first: ChainId,
        count: u64,
    },
    /// CIS returns a datacenter's characteristics to the broker.
    CharacteristicsSent(DcId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorldEvent {
    Handshake(HandshakeStep),
    LeaseAcquired {
        lease_id: LeaseId,
        cloudlet_id: CloudletId,
        vm_id: VmId,
        chain_id: ChainId,
        at: Millis,
    },
    LeaseReleased {
        lease_id: LeaseId,
        at: Millis,
    },
}

/// Everything a simulation run needs besides the workload: the registry, the
/// broker's view of the VM pool, and the lease book.
#[derive(Debug, Clone)]
pub struct World {
    cis: CisRegistry,
    leases: LeaseRegistry,
    vms: Vec<VmState>,
    vm_index: HashMap<VmId, usize>,
    log: Vec<WorldEvent>,
    audit_leases: bool,
    handshake_done: bool,
}

impl World {
    /// Runs the setup handshake: broker request, datacenter registration,
    /// blockchain preparation, then the characteristics response from which
    /// the broker builds its flat VM pool.
    pub fn bootstrap(
        datacenters: Vec<DatacenterSpec>,
        chain_count: u64,
    ) -> Result<Self, EntityError> {
        if chain_count == 0 {
            return Err(EntityError::NoChains);
        }
        let mut world = World {
            cis: CisRegistry::new(),
            leases: LeaseRegistry::new(),
            vms: Vec::new(),
            vm_index: HashMap::new(),
            log: Vec::new(),
            audit_leases: false,
            handshake_done: false,
        };
        world.step(HandshakeStep::BrokerRequest);

        let dc_ids: Vec<DcId> = datacenters.iter().map(|d| d.dc_id).collect();
        for dc in datacenters {
            let id = dc.dc_id;
            world.cis.register_datacenter(dc)?;
            world.step(HandshakeStep::DatacenterRegistered(id));
        }

        let chains = world.cis.prepare_blockchains(chain_count);
        world.step(HandshakeStep::BlockchainsPrepared {
            first: chains[0],
            count: chain_count,
        });

        for id in dc_ids {
            let spec = world.cis.dc_characteristics(id)?.clone();
            world.step(HandshakeStep::CharacteristicsSent(id));
            for vm in spec.vm_specs {
                if world.vm_index.insert(vm.vm_id, world.vms.len()).is_some() {
                    return Err(EntityError::DuplicateVm(vm.vm_id));
                }
                world.vms.push(VmState::new(vm));
            }
        }
        world.handshake_done = true;
        Ok(world)
    }

    /// Also record every lease acquisition and release in [`World::log`].
    pub fn with_lease_audit(mut self, on: bool) -> Self {
        self.audit_leases = on;
        self
    }

    fn step(&mut self, s: HandshakeStep) {
        self.log.push(WorldEvent::Handshake(s));
    }

    pub fn handshake_complete(&self) -> bool {
        self.handshake_done
    }

    pub fn log(&self) -> &[WorldEvent] {
        &self.log
    }

    pub fn cis(&self) -> &CisRegistry {
        &self.cis
    }

    pub fn leases(&self) -> &LeaseRegistry {
        &self.leases
    }

    pub fn vms(&self) -> &[VmState] {
        &self.vms
    }

    pub fn vm_slot(&self, vm_id: VmId) -> Result<usize, EntityError> {
        self.vm_index
            .get(&vm_id)
            .copied()
            .ok_or(EntityError::UnknownVm(vm_id))
    }

    pub fn vm_mut(&mut self, vm_id: VmId) -> Result<&mut VmState, EntityError> {
        let slot = self.vm_slot(vm_id)?;
        Ok(&mut self.vms[slot])
    }

    /// Chain bound to a cloudlet: `cloudlet_id mod chain_count`.
    pub fn chain_for(&self, cloudlet_id: CloudletId) -> ChainId {
        let chains = self.cis.chains();
        chains[(cloudlet_id % chains.len() as u64) as usize]
    }

    pub fn acquire_lease(
        &mut self,
        user_id: UserId,
        cloudlet_id: CloudletId,
        vm_id: VmId,
        chain_id: ChainId,
        now_ms: Millis,
    ) -> Result<LeaseId, EntityError> {
        let lease_id = self
            .leases
            .acquire(&self.cis, user_id, cloudlet_id, vm_id, chain_id, now_ms)?
            .lease_id;
        if self.audit_leases {
            self.log.push(WorldEvent::LeaseAcquired {
                lease_id,
                cloudlet_id,
                vm_id,
                chain_id,
                at: now_ms,
            });
        }
        Ok(lease_id)
    }

    pub fn release_lease(&mut self, lease_id: LeaseId, now_ms: Millis) -> Result<(), EntityError> {
        self.leases.release(lease_id, now_ms)?;
        if self.audit_leases {
            self.log.push(WorldEvent::LeaseReleased {
                lease_id,
                at: now_ms,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dc(id: DcId, vms: &[VmId]) -> DatacenterSpec {
        DatacenterSpec {
            dc_id: id,
            vm_specs: vms.iter().map(|&v| VmSpec::with_id(v)).collect(),
        }
    }

    fn cloudlet(length_mi: u64) -> Cloudlet {
        Cloudlet {
            cloudlet_id: 0,
            user_id: 0,
            length_mi,
            file_size: 300,
            output_size: 300,
            pes: 1,
            priority: 0,
            arrival_ms: 0,
        }
    }

    #[test]
    fn register_and_lookup() {
        let mut cis = CisRegistry::new();
        cis.register_datacenter(dc(0, &[0])).unwrap();
        assert_eq!(cis.dc_characteristics(0).unwrap(), &dc(0, &[0]));
        assert_eq!(
            cis.register_datacenter(dc(0, &[1])),
            Err(EntityError::DuplicateDatacenter(0))
        );
        cis.register_datacenter(dc(1, &[3])).unwrap();
        assert_eq!(cis.dc_characteristics(1).unwrap().dc_id, 1);
        assert_eq!(
            cis.dc_characteristics(7),
            Err(EntityError::UnknownDatacenter(7))
        );
    }

    #[test]
    fn lookup_on_empty_registry() {
        assert!(CisRegistry::new().dc_characteristics(0).is_err());
    }

    #[test]
    fn register_rejects_bad_datacenters() {
        let mut cis = CisRegistry::new();
        assert_eq!(
            cis.register_datacenter(dc(0, &[])),
            Err(EntityError::EmptyDatacenter(0))
        );
        assert_eq!(
            cis.register_datacenter(dc(0, &[1, 1])),
            Err(EntityError::DuplicateVm(1))
        );
        let mut slow = dc(2, &[0]);
        slow.vm_specs[0].mips = 0;
        assert!(cis.register_datacenter(slow).is_err());
    }

    #[test]
    fn chains_are_fresh_and_consecutive() {
        let mut cis = CisRegistry::new();
        assert_eq!(cis.prepare_blockchains(3), vec![0, 1, 2]);
        assert_eq!(cis.prepare_blockchains(0), Vec::<ChainId>::new());
        assert_eq!(cis.prepare_blockchains(2), vec![3, 4]);
        assert_eq!(cis.chains(), &[0, 1, 2, 3, 4]);
    }

    #[test]
    fn lease_lifecycle() {
        let mut cis = CisRegistry::new();
        cis.prepare_blockchains(2);
        let mut reg = LeaseRegistry::new();
        let id = reg.acquire(&cis, 1, 1, 0, 0, 0).unwrap().lease_id;
        assert!(reg.get(id).unwrap().is_active());
        assert_eq!(
            reg.acquire(&cis, 1, 1, 0, 1, 5),
            Err(EntityError::DoubleLease(1))
        );
        reg.release(id, 100).unwrap();
        assert_eq!(reg.get(id).unwrap().released_ms, Some(100));
        assert_eq!(reg.release(id, 200), Err(EntityError::AlreadyReleased(id)));
        assert_eq!(reg.release(42, 200), Err(EntityError::UnknownLease(42)));
        // released cloudlet may lease again
        reg.acquire(&cis, 1, 1, 0, 1, 300).unwrap();
        assert_eq!(reg.acquired_count(), 2);
        assert_eq!(reg.released_count(), 1);
    }

    #[test]
    fn lease_rejects_unknown_chain() {
        let mut cis = CisRegistry::new();
        cis.prepare_blockchains(2);
        let mut reg = LeaseRegistry::new();
        assert_eq!(
            reg.acquire(&cis, 0, 0, 0, 99, 0),
            Err(EntityError::UnknownChain(99))
        );
    }

    #[test]
    fn release_cannot_precede_acquire() {
        let mut cis = CisRegistry::new();
        cis.prepare_blockchains(1);
        let mut reg = LeaseRegistry::new();
        let id = reg.acquire(&cis, 0, 0, 0, 0, 50).unwrap().lease_id;
        assert!(matches!(
            reg.release(id, 10),
            Err(EntityError::ReleaseBeforeAcquire { .. })
        ));
    }

    #[test]
    fn exec_duration_examples() {
        let vm = VmSpec::with_id(0);
        assert_eq!(exec_duration(&cloudlet(40_000), &vm), Ok(160_000));
        assert_eq!(exec_duration(&cloudlet(250), &vm), Ok(1_000));
        assert_eq!(exec_duration(&cloudlet(1), &vm), Ok(4));
        let odd = VmSpec {
            mips: 3,
            ..vm.clone()
        };
        assert_eq!(exec_duration(&cloudlet(1), &odd), Ok(334));
        assert_eq!(
            exec_duration(&cloudlet(0), &vm),
            Err(EntityError::ZeroLength)
        );
        let dead = VmSpec { mips: 0, ..vm };
        assert_eq!(
            exec_duration(&cloudlet(1), &dead),
            Err(EntityError::ZeroMips)
        );
    }

    #[test]
    fn exec_duration_uses_shared_pes() {
        let vm = VmSpec {
            pes: 4,
            ..VmSpec::with_id(0)
        };
        let mut c = cloudlet(40_000);
        c.pes = 2;
        assert_eq!(exec_duration(&c, &vm), Ok(80_000));
        c.pes = 8;
        assert_eq!(exec_duration(&c, &vm), Ok(40_000));
    }

    #[test]
    fn bootstrap_logs_handshake_in_order() {
        let world = World::bootstrap(vec![dc(0, &[0, 1])], 3).unwrap();
        assert!(world.handshake_complete());
        assert_eq!(
            world.log(),
            &[
                WorldEvent::Handshake(HandshakeStep::BrokerRequest),
                WorldEvent::Handshake(HandshakeStep::DatacenterRegistered(0)),
                WorldEvent::Handshake(HandshakeStep::BlockchainsPrepared { first: 0, count: 3 }),
                WorldEvent::Handshake(HandshakeStep::CharacteristicsSent(0)),
            ]
        );
        assert_eq!(world.vms().len(), 2);
        assert_eq!(world.chain_for(7), 1);
    }

    #[test]
    fn bootstrap_rejects_vm_ids_shared_across_datacenters() {
        let err = World::bootstrap(vec![dc(0, &[0]), dc(1, &[0])], 1).unwrap_err();
        assert_eq!(err, EntityError::DuplicateVm(0));
        assert_eq!(
            World::bootstrap(vec![dc(0, &[0])], 0).unwrap_err(),
            EntityError::NoChains
        );
    }

    #[test]
    fn audited_world_logs_leases() {
        let mut world = World::bootstrap(vec![dc(0, &[0])], 1)
            .unwrap()
            .with_lease_audit(true);
        let id = world.acquire_lease(5, 5, 0, 0, 10).unwrap();
        world.release_lease(id, 20).unwrap();
        assert_eq!(world.log().len(), 6);
        assert!(matches!(
            world.log()[5],
            WorldEvent::LeaseReleased { at: 20, .. }
        ));
    }
}
