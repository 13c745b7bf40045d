// scratch diagnostic
use fcm_harness::experiments::{fault_scenario, run_fault_experiment};

fn main() {
    let cfg = fault_scenario();
    let res = run_fault_experiment(&cfg, 1).unwrap();
    for s in res.output.trajectory.iter().step_by(50) {
        if s.t >= 5.0 {
            println!(
                "t={:.2} rates=({:+7.2},{:+7.2},{:+8.2}) eul=({:+6.2},{:+6.2}) w=({:6.0},{:6.0},{:6.0},{:6.0}) cmd=({:6.0},{:6.0},{:6.0},{:6.0}) z={:+.1}",
                s.t,
                s.rates.x, s.rates.y, s.rates.z,
                s.euler.0.to_degrees(), s.euler.1.to_degrees(),
                s.speeds[0], s.speeds[1], s.speeds[2], s.speeds[3],
                s.commanded[0], s.commanded[1], s.commanded[2], s.commanded[3],
                s.position.z,
            );
        }
    }
}
