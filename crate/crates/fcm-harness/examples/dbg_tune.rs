// scratch tuning harness
use fcm_harness::experiments::{fault_scenario, nominal_scenario, run_fault_experiment, run_nominal_experiment};

fn main() {
    // candidate knob sets: (omega_max, att_p_rp, rate_max_rp, rate_p_rp, vel_p)
    let candidates = [
        (3500.0, 9.0, 7.0, 22.0, 3.0),
        (2600.0, 9.0, 7.0, 22.0, 3.0),
        (2600.0, 12.0, 12.0, 25.0, 3.0),
        (2400.0, 12.0, 12.0, 25.0, 3.0),
        (2200.0, 12.0, 12.0, 25.0, 3.0),
        (2600.0, 14.0, 16.0, 28.0, 3.5),
    ];
    for (omega_max, att_p, rate_max, rate_p, vel_p) in candidates {
        let patch = |cfg: &mut fcm_core::config::ScenarioConfig| {
            cfg.actuators.omega_max = omega_max;
            cfg.controller.att_p = [att_p, att_p, 5.0];
            cfg.controller.rate_max = [rate_max, rate_max, 45.0];
            cfg.controller.rate_p = [rate_p, rate_p, 12.0];
            cfg.controller.vel_p = vel_p;
        };
        let mut ncfg = nominal_scenario();
        patch(&mut ncfg);
        let mut nominal_clean = 0;
        for seed in 1..=5 {
            let r = run_nominal_experiment(&ncfg, seed).unwrap();
            let w = r.detection.warmup_samples;
            let all_one = r.detection.fcm[w..].iter().all(|v| *v == 1);
            if r.detection.detection_time_s.is_none() && all_one {
                nominal_clean += 1;
            }
        }
        let mut fcfg = fault_scenario();
        patch(&mut fcfg);
        let mut in_window = 0;
        let mut dets = Vec::new();
        for seed in 1..=20 {
            let r = run_fault_experiment(&fcfg, seed).unwrap();
            let d = r.detection.detection_time_s;
            dets.push(d);
            if let Some(t) = d {
                if t > 5.2 && t <= 6.9 {
                    in_window += 1;
                }
            }
        }
        let shown: Vec<String> = dets
            .iter()
            .take(8)
            .map(|d| d.map(|t| format!("{t:.2}")).unwrap_or_else(|| "-".into()))
            .collect();
        println!(
            "wmax={omega_max:4.0} att={att_p:4.1} rmax={rate_max:4.1} rp={rate_p:4.1}: nominal {nominal_clean}/5 clean, fault {in_window}/20 in (5.2,6.9], dets={shown:?}"
        );
    }
}
