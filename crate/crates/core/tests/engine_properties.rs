//! Run-level invariants over random workloads.

use baas_sim::{
    generate, AgingQuantum, ArrivalModel, Cloudlet, DatacenterSpec, HybridParams, LengthDist,
    Policy, PriorityDist, RunOutcome, SimulationRun, VmSpec, WorkloadConfig, World,
};
use proptest::prelude::*;

fn world(mips: &[u64], chains: u64) -> World {
    let vm_specs = mips
        .iter()
        .enumerate()
        .map(|(i, &m)| VmSpec {
            mips: m,
            ..VmSpec::with_id(i as u32)
        })
        .collect();
    World::bootstrap(vec![DatacenterSpec { dc_id: 0, vm_specs }], chains).unwrap()
}

fn run(w: World, policy: Policy, cloudlets: &[Cloudlet]) -> RunOutcome {
    SimulationRun::new(w, policy, cloudlets)
        .unwrap()
        .run()
        .unwrap()
}

fn arb_workload() -> impl Strategy<Value = WorkloadConfig> {
    (
        0u64..120,
        any::<u64>(),
        1u64..40_000,
        prop_oneof![
            Just(ArrivalModel::AllAtZero),
            (0u64..100_000, 0u64..200_000).prop_map(|(b, j)| ArrivalModel::UniformJitter {
                base_interval_ms: b,
                jitter_ms: j
            }),
        ],
    )
        .prop_map(|(n, seed, span, arrival)| WorkloadConfig {
            num_cloudlets: n,
            length: LengthDist::Uniform {
                min: 1_000,
                max: 1_000 + span,
            },
            priority: PriorityDist::Uniform { levels: 8 },
            arrival,
            seed,
            ..WorkloadConfig::default()
        })
}

fn arb_policy() -> impl Strategy<Value = Policy> {
    prop_oneof![
        Just(Policy::Fcfs),
        Just(Policy::Sjf),
        Just(Policy::Priority),
        (1u64..100_000).prop_map(|q| Policy::Hybrid(HybridParams {
            aging_quantum: AgingQuantum::millis(q).unwrap(),
            priority_levels: 8,
        })),
        Just(Policy::Hybrid(HybridParams {
            aging_quantum: AgingQuantum::Infinite,
            priority_levels: 8,
        })),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn conservation_and_accounting(
        cfg in arb_workload(),
        policy in arb_policy(),
        mips in prop::collection::vec(50u64..500, 1..6),
        chains in 1u64..5,
    ) {
        let cloudlets = generate(&cfg).unwrap();
        let out = run(world(&mips, chains), policy, &cloudlets);

        prop_assert_eq!(out.records.len(), cloudlets.len());
        for (r, c) in out.records.iter().zip(&cloudlets) {
            prop_assert_eq!(r.cloudlet_id, c.cloudlet_id);
            prop_assert!(r.arrival_ms <= r.start_ms && r.start_ms <= r.finish_ms);
            let vm = &out.world.vms()[out.world.vm_slot(r.vm_id).unwrap()];
            prop_assert_eq!(r.exec_ms(), baas_sim::exec_duration(c, &vm.spec).unwrap());
        }
        let last = out.records.iter().map(|r| r.finish_ms).max().unwrap_or(0);
        prop_assert_eq!(out.clock_ms, last);
        prop_assert_eq!(out.events_processed, 2 * cloudlets.len() as u64);

        // per-VM busy time equals the sum of that VM's execution spans
        for vm in out.world.vms() {
            let spans: u64 = out.records.iter()
                .filter(|r| r.vm_id == vm.id())
                .map(|r| r.exec_ms())
                .sum();
            prop_assert_eq!(vm.total_busy_ms, spans);
            prop_assert!(vm.is_idle());
        }

        let leases = out.world.leases();
        prop_assert_eq!(leases.acquired_count(), cloudlets.len());
        prop_assert_eq!(leases.released_count(), cloudlets.len());
        for l in leases.all() {
            prop_assert_eq!(l.chain_id, l.cloudlet_id % chains);
            prop_assert!(l.released_ms.unwrap() >= l.acquired_ms);
        }
    }

    #[test]
    fn work_conserving(
        cfg in arb_workload(),
        policy in arb_policy(),
        mips in prop::collection::vec(50u64..500, 1..5),
    ) {
        let cloudlets = generate(&cfg).unwrap();
        let out = run(world(&mips, 1), policy, &cloudlets);
        // Idle gaps per VM: [0, first start), [finish_i, start_{i+1}), [last finish, inf).
        let mut gaps = Vec::new();
        for vm in out.world.vms() {
            let mut spans: Vec<(u64, u64)> = out.records.iter()
                .filter(|r| r.vm_id == vm.id())
                .map(|r| (r.start_ms, r.finish_ms))
                .collect();
            spans.sort_unstable();
            let mut free_from = 0;
            for (s, f) in spans {
                if free_from < s {
                    gaps.push((free_from, s));
                }
                free_from = f;
            }
            gaps.push((free_from, u64::MAX));
        }
        // No VM may sit idle during any interval in which a task was waiting.
        for r in out.records.iter().filter(|r| r.wait_ms > 0) {
            for &(g0, g1) in &gaps {
                prop_assert!(!(g0 < r.start_ms && r.arrival_ms < g1),
                    "cloudlet {} waited [{}, {}) while a vm idled [{}, {})",
                    r.cloudlet_id, r.arrival_ms, r.start_ms, g0, g1);
            }
        }
    }

    #[test]
    fn runs_are_deterministic(cfg in arb_workload(), policy in arb_policy()) {
        let cloudlets = generate(&cfg).unwrap();
        let a = run(world(&[250, 250, 100], 3), policy, &cloudlets);
        let b = run(world(&[250, 250, 100], 3), policy, &cloudlets);
        prop_assert_eq!(&a.records, &b.records);
        prop_assert_eq!(&a.dispatch_order, &b.dispatch_order);
        prop_assert_eq!(a.world.leases().all(), b.world.leases().all());
    }

    #[test]
    fn batch_on_identical_vms_is_balanced(
        cfg in arb_workload(),
        policy in arb_policy(),
        vms in 1usize..8,
    ) {
        let cfg = WorkloadConfig { arrival: ArrivalModel::AllAtZero, ..cfg };
        let cloudlets = generate(&cfg).unwrap();
        prop_assume!(!cloudlets.is_empty());
        let out = run(world(&vec![250; vms], 1), policy, &cloudlets);
        let busy = out.vm_busy_ms();
        let spread = busy.iter().max().unwrap() - busy.iter().min().unwrap();
        let longest = out.records.iter().map(|r| r.exec_ms()).max().unwrap();
        prop_assert!(spread <= longest, "spread {} > longest task {}", spread, longest);
    }
}

#[test]
fn dispatch_order_matches_start_times() {
    let cfg = WorkloadConfig {
        num_cloudlets: 300,
        length: LengthDist::Uniform {
            min: 1_000,
            max: 90_000,
        },
        priority: PriorityDist::Uniform { levels: 8 },
        arrival: ArrivalModel::UniformJitter {
            base_interval_ms: 2_000,
            jitter_ms: 30_000,
        },
        seed: 9,
        ..WorkloadConfig::default()
    };
    let cloudlets = generate(&cfg).unwrap();
    let out = run(
        world(&[250; 4], 2),
        Policy::Hybrid(HybridParams::default()),
        &cloudlets,
    );
    let starts: Vec<u64> = out
        .dispatch_order
        .iter()
        .map(|&id| out.records[id as usize].start_ms)
        .collect();
    assert!(starts.windows(2).all(|w| w[0] <= w[1]));
}
