// scratch diagnostic
use fcm_harness::experiments::{fault_scenario, run_fault_experiment};

fn main() {
    let cfg = fault_scenario();
    for seed in 1..=20u64 {
        let res = run_fault_experiment(&cfg, seed).unwrap();
        let det = &res.detection;
        let fcm_zeros = det.fcm.iter().filter(|v| **v == 0).count();
        let fcm_tr = fcm_harness_transitions(&det.fcm);
        let fcmw_tr = fcm_harness_transitions(&det.fcmw);
        println!(
            "seed {seed:>2}: detection={:?} first_fcm0={:?} fcm_zeros={fcm_zeros} trans fcm={fcm_tr} fcmw={fcmw_tr} rank3={}",
            det.detection_time_s,
            det.first_fcm_zero_s(),
            det.rank_trace.iter().all(|r| *r == 3)
        );
        if seed == 1 {
            let k_fault = ((5.2 - det.t0) / det.dt) as usize;
            let mut printed = 0;
            for s in &det.samples {
                let k = ((s.time - det.t0) / det.dt).round() as usize;
                if k >= k_fault && printed < 40 && k % 25 == 0 {
                    println!(
                        "  t={:.3} |e|={:.2e} duc=({:+.1e},{:+.1e},{:+.1e}) head=({:.1e},{:.1e},{:.1e}) fcm={} m={:?}",
                        s.time,
                        s.error.norm(),
                        s.corrective.x, s.corrective.y, s.corrective.z,
                        s.headroom.x, s.headroom.y, s.headroom.z,
                        s.fcm,
                        det.m_trace[k].map(|v| (v * 1000.0).round() / 1000.0),
                    );
                    printed += 1;
                }
            }
        }
    }
}

fn fcm_harness_transitions(trace: &[u8]) -> usize {
    trace.windows(2).filter(|w| w[0] != w[1]).count()
}
