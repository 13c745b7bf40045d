// scratch diagnostic
use fcm_harness::experiments::{nominal_scenario, run_nominal_experiment};

fn main() {
    let cfg = nominal_scenario();
    let res = run_nominal_experiment(&cfg, 1).unwrap();
    let det = &res.detection;
    println!(
        "detection={:?} first_eval={} warmup={}",
        det.detection_time_s, det.first_evaluated, det.warmup_samples
    );
    let zeros: Vec<usize> = det
        .fcm
        .iter()
        .enumerate()
        .filter(|(k, v)| **v == 0 && *k >= det.warmup_samples)
        .map(|(k, _)| k)
        .take(20)
        .collect();
    println!("first fcm zeros at samples: {zeros:?}");
    if let Some(&k0) = zeros.first() {
        for s in &det.samples {
            let k = ((s.time - det.t0) / det.dt).round() as usize;
            if (k as i64 - k0 as i64).abs() <= 3 {
                println!(
                    "k={k} t={:.3} e={:+.3e},{:+.3e},{:+.3e} duc={:+.3e},{:+.3e},{:+.3e} head={:.3e},{:.3e},{:.3e} m={:?} rank={}",
                    s.time,
                    s.error.x, s.error.y, s.error.z,
                    s.corrective.x, s.corrective.y, s.corrective.z,
                    s.headroom.x, s.headroom.y, s.headroom.z,
                    det.m_trace[k], s.rank
                );
            }
        }
    }
    // M statistics over the run
    let mut min_m = [1.0f64; 3];
    for m in &det.m_trace {
        for i in 0..3 {
            min_m[i] = min_m[i].min(m[i]);
        }
    }
    println!("min M over run: {min_m:?}");
    // count of fcm zeros
    let nz = det.fcm.iter().filter(|v| **v == 0).count();
    println!("total fcm zeros: {nz} / {}", det.fcm.len());
    // effective product estimate: reconstruct from samples corrective vs error
    for s in det.samples.iter().step_by(500) {
        println!(
            "t={:.2} |e|={:.3e} |duc|={:.3e} head_min={:.3e}",
            s.time,
            s.error.norm(),
            s.corrective.norm(),
            s.headroom.min()
        );
    }
}
