//! Writes the bundled JHU-layout fixture: one Gillespie path per row,
//! accumulated from zero on 2/29/20 over 366 date columns.
//!
//!     cargo run --release -p l2calib-core --example make_fixture -- fixtures/jhu.csv
//!
//! Sylvania is the recovery target: N = 1e6, θ₀ = (0.3, 0.2, 0.1, 400, 400, 0),
//! so R0 = 3 and the mean incubation period is 5 days.

use std::fmt::Write as _;

use chrono::{Duration, NaiveDate};
use l2calib::seir::{gillespie_seir, SeirParams};

struct Row {
    province: &'static str,
    country: &'static str,
    lat: f64,
    long: f64,
    params: [f64; 6],
    population: f64,
    seed: u64,
}

const DAYS: usize = 366;

const ROWS: [Row; 4] = [
    Row { province: "", country: "US", lat: 40.0, long: -100.0, params: [0.25, 0.2, 0.125, 300.0, 300.0, 0.0], population: 3e6, seed: 4 },
    Row { province: "", country: "Sylvania", lat: 47.1, long: 19.5, params: [0.3, 0.2, 0.1, 400.0, 400.0, 0.0], population: 1e6, seed: 1 },
    Row { province: "North", country: "Freedonia", lat: 44.2, long: 21.0, params: [0.35, 0.25, 0.125, 100.0, 100.0, 0.0], population: 2.5e5, seed: 2 },
    Row { province: "South", country: "Freedonia", lat: 42.8, long: 21.4, params: [0.35, 0.25, 0.125, 100.0, 100.0, 0.0], population: 2.5e5, seed: 3 },
];

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "fixtures/jhu.csv".into());
    let day0 = NaiveDate::from_ymd_opt(2020, 2, 29).unwrap();

    let mut csv = String::from("Province/State,Country/Region,Lat,Long");
    for d in 0..DAYS {
        let date = day0 + Duration::days(d as i64);
        write!(csv, ",{}", date.format("%-m/%-d/%y")).unwrap();
    }
    csv.push('\n');

    for r in &ROWS {
        let [beta, kappa, gamma, i0, e0, r0_init] = r.params;
        let p = SeirParams { beta, kappa, gamma, i0, e0, r0_init, population: r.population };
        // column d holds the total through day d - 1 of the path
        let daily = gillespie_seir(&p, DAYS - 1, r.seed);
        write!(csv, "{},{},{},{},0", r.province, r.country, r.lat, r.long).unwrap();
        let mut total = 0u64;
        for y in daily {
            total += y;
            write!(csv, ",{total}").unwrap();
        }
        csv.push('\n');
    }
    std::fs::write(&out, csv).unwrap();
    eprintln!("wrote {out}");
}
