use psat::bounds::ProblemParams;
use psat::certify::{certify_density, max_certified_density, CertifyConfig, Status};

fn config() -> CertifyConfig {
    CertifyConfig { grid_points: 1000, ..Default::default() }
}

#[test]
fn certificate_is_reproducible() {
    let params = ProblemParams::new(4, 0.5).unwrap();
    let a = serde_json::to_string(&certify_density(&params, 20.0, &config()).unwrap()).unwrap();
    let b = serde_json::to_string(&certify_density(&params, 20.0, &config()).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn certified_points_carry_margins() {
    let params = ProblemParams::new(3, 0.5).unwrap();
    let cert = certify_density(&params, 10.0, &config()).unwrap();
    assert_eq!(cert.status, Status::Certified);
    assert_eq!(cert.points.len(), 1000);
    assert!(cert.points.iter().filter(|p| !p.peak_zone).all(|p| p.margin >= cert.room));
}

#[test]
fn search_brackets_the_certified_density() {
    let params = ProblemParams::new(3, 0.5).unwrap();
    let s = max_certified_density(&params, &config()).unwrap();
    assert!(s.monotone_probe_ok);
    assert!(s.r_low < s.r_failed);
    assert_eq!(certify_density(&params, s.r_low, &config()).unwrap().status, Status::Certified);
    assert_ne!(certify_density(&params, s.r_failed * 1.01, &config()).unwrap().status, Status::Certified);
}
