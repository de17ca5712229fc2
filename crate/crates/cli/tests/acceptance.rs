//! Runs all twelve acceptance criteria on the full profile and prints one
//! line per criterion. Set `PATHKAC_PROFILE=quick` for the reduced sizes.

use pathkac_cli::accept::{run_suite, Profile};
use pathkac_cli::schema::DEFAULT_SEED;

fn main() {
    let profile = match std::env::var("PATHKAC_PROFILE").as_deref() {
        Ok("quick") => Profile::Quick,
        _ => Profile::Full,
    };
    let suite = run_suite(profile, DEFAULT_SEED);
    for c in &suite.criteria {
        println!("{}", c.line());
        if let Some(e) = &c.error {
            println!("    error: {e}");
        }
    }
    let passed = suite.criteria.iter().filter(|c| c.pass).count();
    println!(
        "acceptance: {passed}/{} criteria pass",
        suite.criteria.len()
    );
    if !suite.pass {
        std::process::exit(1);
    }
}
