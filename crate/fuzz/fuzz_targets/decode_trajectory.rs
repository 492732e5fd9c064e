#![no_main]

use libfuzzer_sys::fuzz_target;
use rmader_core::trajectory::TrajectorySpline;

fuzz_target!(|data: &[u8]| {
    if let Ok(traj) = TrajectorySpline::from_wire_json(data) {
        let wire = traj.to_wire_json();
        let back = TrajectorySpline::from_wire_json(wire.as_bytes()).expect("encoded trajectory decodes");
        assert_eq!(back, traj);
        // Validated splines evaluate anywhere without panicking.
        let _ = traj.evaluate(traj.start_time(), 0);
        let _ = traj.evaluate(traj.end_time(), 3);
    }
});
