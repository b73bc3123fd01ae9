use radtomo::acceptance;

#[test]
#[ignore]
fn calib_fast() {
    for c in [
        acceptance::exit_time_oracle(),
        acceptance::convexity_scaling(),
        acceptance::glancing_trace_table(),
        acceptance::operator_identities(),
    ] {
        println!("{}", c.line());
    }
}

#[test]
#[ignore]
fn calib_medium() {
    for c in [
        acceptance::contraction_rates(),
        acceptance::accretivity_gap(),
        acceptance::forward_closed_form(),
        acceptance::santalo_identity(),
    ] {
        println!("{}", c.line());
    }
}

#[test]
#[ignore]
fn calib_heavy_a() {
    for c in [
        acceptance::measurement_norm_bound(),
        acceptance::isotropic_roundtrips(),
        acceptance::degree_descent(),
    ] {
        println!("{}", c.line());
    }
}

#[test]
#[ignore]
fn calib_heavy_b() {
    println!("{}", acceptance::gauge_null_space().line());
}

#[test]
#[ignore]
fn calib_heavy_c() {
    println!("{}", acceptance::synthetic_roundtrips().line());
}
