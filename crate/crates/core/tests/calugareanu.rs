use kp_core::energy::contact_slack;
use kp_core::presets::random_closed_rod;
use kp_core::rod::integrate_frame;
use kp_core::topology::{calugareanu_residual, rod_link_number, total_twist, writhe};
use kp_core::CrossSection;

#[test]
fn fifty_random_rods_satisfy_lk_tw_wr() {
    // rods whose strands come closer than 2 * clearance are skipped
    let clearance = CrossSection::regular(8, 0.01).unwrap();
    let eps = 0.002;
    let mut done = 0;
    let mut worst: f64 = 0.0;
    let mut seed = 0;
    while done < 50 {
        seed += 1;
        assert!(seed < 500, "too few admissible rods");
        let st = random_closed_rod::<f64>(400, 1.0, 0.4, seed).unwrap();
        let curve = integrate_frame(&st);
        if contact_slack(&curve, &clearance) <= 0.0 {
            continue;
        }
        let res = calugareanu_residual(&st, eps, 0.0).unwrap();
        let lk = rod_link_number(&st, eps, 0.0).unwrap() as f64;
        let wr = writhe(&curve).unwrap();
        assert!(res < 0.05, "seed {seed}: lk {lk} tw {} wr {wr}", total_twist(&st));
        worst = worst.max(res);
        done += 1;
    }
    eprintln!("worst residual {worst:.3e} after {seed} draws");
}
