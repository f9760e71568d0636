//! Shared fixtures for integration tests.
#![allow(dead_code)] // not every test binary uses every fixture

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn iris_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/iris.csv")
}

const EDUCATION: [(&str, u32); 16] = [
    ("Preschool", 1),
    ("1st-4th", 2),
    ("5th-6th", 3),
    ("7th-8th", 4),
    ("9th", 5),
    ("10th", 6),
    ("11th", 7),
    ("12th", 8),
    ("HS-grad", 9),
    ("Some-college", 10),
    ("Assoc-voc", 11),
    ("Assoc-acdm", 12),
    ("Bachelors", 13),
    ("Masters", 14),
    ("Prof-school", 15),
    ("Doctorate", 16),
];

const WORKCLASS: [&str; 8] = [
    "Private",
    "Self-emp-not-inc",
    "Self-emp-inc",
    "Federal-gov",
    "Local-gov",
    "State-gov",
    "Without-pay",
    "Never-worked",
];

const MARITAL: [&str; 5] =
    ["Married-civ-spouse", "Never-married", "Divorced", "Separated", "Widowed"];

const OCCUPATION: [&str; 14] = [
    "Tech-support",
    "Craft-repair",
    "Other-service",
    "Sales",
    "Exec-managerial",
    "Prof-specialty",
    "Handlers-cleaners",
    "Machine-op-inspct",
    "Adm-clerical",
    "Farming-fishing",
    "Transport-moving",
    "Priv-house-serv",
    "Protective-serv",
    "Armed-Forces",
];

const RELATIONSHIP: [&str; 6] =
    ["Husband", "Wife", "Own-child", "Not-in-family", "Other-relative", "Unmarried"];

const RACE: [&str; 5] = ["White", "Black", "Asian-Pac-Islander", "Amer-Indian-Eskimo", "Other"];

const COUNTRY: [&str; 12] = [
    "United-States",
    "Mexico",
    "Philippines",
    "Germany",
    "Canada",
    "Puerto-Rico",
    "El-Salvador",
    "India",
    "Cuba",
    "England",
    "China",
    "Jamaica",
];

/// Per-profile generation tables. Each weight row aligns with the constant
/// value lists above; profiles differ enough that instances and variable
/// parts both carry block structure.
struct Profile {
    weight: u32,
    age_base: i64,
    age_spread: i64,
    education_w: [u32; 16],
    workclass_w: [u32; 8],
    marital_w: [u32; 5],
    occupation_w: [u32; 14],
    hours_base: i64,
    hours_spread: i64,
    gain_permille: u32,
    high_income_permille: u32,
    foreign_permille: u32,
}

const PROFILES: [Profile; 8] = [
    // young service workers
    Profile {
        weight: 14,
        age_base: 22,
        age_spread: 5,
        education_w: [0, 0, 0, 0, 2, 4, 8, 4, 50, 28, 2, 2, 0, 0, 0, 0],
        workclass_w: [88, 2, 0, 1, 3, 3, 2, 1],
        marital_w: [5, 80, 8, 5, 2],
        occupation_w: [2, 4, 40, 24, 1, 1, 14, 6, 6, 1, 1, 0, 0, 0],
        hours_base: 25,
        hours_spread: 10,
        gain_permille: 5,
        high_income_permille: 10,
        foreign_permille: 120,
    },
    // blue-collar high-school
    Profile {
        weight: 18,
        age_base: 38,
        age_spread: 11,
        education_w: [0, 1, 2, 4, 8, 8, 8, 3, 56, 8, 1, 1, 0, 0, 0, 0],
        workclass_w: [90, 4, 1, 0, 2, 2, 1, 0],
        marital_w: [55, 18, 18, 6, 3],
        occupation_w: [0, 36, 6, 4, 1, 1, 12, 20, 2, 6, 12, 0, 0, 0],
        hours_base: 41,
        hours_spread: 6,
        gain_permille: 20,
        high_income_permille: 120,
        foreign_permille: 110,
    },
    // clerical / some college
    Profile {
        weight: 16,
        age_base: 34,
        age_spread: 10,
        education_w: [0, 0, 0, 0, 1, 1, 2, 2, 18, 48, 14, 12, 2, 0, 0, 0],
        workclass_w: [84, 2, 1, 3, 4, 4, 1, 1],
        marital_w: [38, 34, 18, 7, 3],
        occupation_w: [14, 2, 6, 22, 4, 2, 2, 2, 42, 0, 2, 0, 2, 0],
        hours_base: 38,
        hours_spread: 5,
        gain_permille: 25,
        high_income_permille: 160,
        foreign_permille: 70,
    },
    // bachelors professionals
    Profile {
        weight: 15,
        age_base: 36,
        age_spread: 9,
        education_w: [0, 0, 0, 0, 0, 0, 0, 0, 2, 6, 2, 2, 80, 6, 1, 1],
        workclass_w: [82, 3, 3, 3, 3, 4, 1, 1],
        marital_w: [52, 28, 14, 4, 2],
        occupation_w: [6, 2, 1, 14, 32, 36, 0, 0, 6, 0, 0, 0, 2, 1],
        hours_base: 45,
        hours_spread: 7,
        gain_permille: 90,
        high_income_permille: 460,
        foreign_permille: 60,
    },
    // advanced degrees
    Profile {
        weight: 9,
        age_base: 45,
        age_spread: 10,
        education_w: [0, 0, 0, 0, 0, 0, 0, 0, 0, 2, 0, 2, 10, 56, 14, 16],
        workclass_w: [62, 4, 6, 6, 8, 12, 1, 1],
        marital_w: [62, 18, 14, 4, 2],
        occupation_w: [4, 0, 0, 4, 30, 56, 0, 0, 2, 0, 0, 0, 2, 2],
        hours_base: 49,
        hours_spread: 8,
        gain_permille: 160,
        high_income_permille: 700,
        foreign_permille: 90,
    },
    // senior self-employed
    Profile {
        weight: 9,
        age_base: 52,
        age_spread: 12,
        education_w: [0, 0, 1, 2, 3, 3, 3, 1, 34, 14, 4, 3, 24, 5, 2, 1],
        workclass_w: [14, 52, 26, 1, 2, 2, 2, 1],
        marital_w: [66, 10, 16, 5, 3],
        occupation_w: [1, 22, 4, 22, 22, 10, 2, 2, 2, 10, 2, 0, 0, 1],
        hours_base: 47,
        hours_spread: 14,
        gain_permille: 220,
        high_income_permille: 420,
        foreign_permille: 80,
    },
    // low-wage immigrant service
    Profile {
        weight: 8,
        age_base: 33,
        age_spread: 10,
        education_w: [6, 10, 16, 14, 8, 6, 6, 4, 22, 6, 1, 1, 0, 0, 0, 0],
        workclass_w: [90, 3, 1, 0, 1, 1, 3, 1],
        marital_w: [42, 34, 12, 8, 4],
        occupation_w: [0, 8, 34, 4, 0, 0, 14, 12, 2, 14, 6, 6, 0, 0],
        hours_base: 36,
        hours_spread: 12,
        gain_permille: 4,
        high_income_permille: 24,
        foreign_permille: 720,
    },
    // public sector
    Profile {
        weight: 11,
        age_base: 41,
        age_spread: 10,
        education_w: [0, 0, 0, 0, 1, 1, 2, 1, 16, 30, 8, 8, 26, 6, 1, 0],
        workclass_w: [6, 1, 0, 22, 42, 26, 2, 1],
        marital_w: [56, 22, 15, 4, 3],
        occupation_w: [8, 6, 6, 2, 22, 18, 2, 2, 16, 0, 4, 0, 13, 1],
        hours_base: 40,
        hours_spread: 4,
        gain_permille: 45,
        high_income_permille: 300,
        foreign_permille: 70,
    },
];

fn pick<'a>(rng: &mut ChaCha8Rng, values: &[&'a str], weights: &[u32]) -> &'a str {
    let total: u32 = weights.iter().sum();
    let mut roll = rng.random_range(0..total);
    for (v, &w) in values.iter().zip(weights) {
        if roll < w {
            return v;
        }
        roll -= w;
    }
    values[values.len() - 1]
}

fn jitter(rng: &mut ChaCha8Rng, base: i64, spread: i64, lo: i64, hi: i64) -> i64 {
    (base + rng.random_range(-spread..=spread) + rng.random_range(-spread..=spread))
        .clamp(lo, hi)
}

/// Writes a census-style table of `n` rows and 15 variables: mixed numeric
/// and categorical, a deterministic education → educationNum mapping, and
/// "?" missing tokens in workclass/occupation/nativeCountry.
pub fn write_adult_csv(path: &Path, n: usize, seed: u64) -> std::io::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(
        w,
        "age,workclass,fnlwgt,education,educationNum,maritalStatus,occupation,\
         relationship,race,sex,capitalGain,capitalLoss,hoursPerWeek,nativeCountry,class"
    )?;
    let profile_weights: Vec<u32> = PROFILES.iter().map(|p| p.weight).collect();
    let total_weight: u32 = profile_weights.iter().sum();
    for _ in 0..n {
        let mut roll = rng.random_range(0..total_weight);
        let mut z = 0;
        for (i, &pw) in profile_weights.iter().enumerate() {
            if roll < pw {
                z = i;
                break;
            }
            roll -= pw;
        }
        let p = &PROFILES[z];

        let age = jitter(&mut rng, p.age_base, p.age_spread, 17, 90);
        let workclass = if rng.random_range(0..1000) < 56 {
            "?"
        } else {
            pick(&mut rng, &WORKCLASS, &p.workclass_w)
        };
        let fnlwgt = rng.random_range(19000..500000);
        let edu_idx = {
            let total: u32 = p.education_w.iter().sum();
            let mut roll = rng.random_range(0..total);
            let mut idx = 0;
            for (i, &ew) in p.education_w.iter().enumerate() {
                if roll < ew {
                    idx = i;
                    break;
                }
                roll -= ew;
            }
            idx
        };
        let (education, education_num) = EDUCATION[edu_idx];
        let marital = pick(&mut rng, &MARITAL, &p.marital_w);
        let occupation = if rng.random_range(0..1000) < 57 {
            "?"
        } else {
            pick(&mut rng, &OCCUPATION, &p.occupation_w)
        };
        let sex = if rng.random_range(0..1000) < 668 { "Male" } else { "Female" };
        let relationship = if marital == "Married-civ-spouse" {
            if sex == "Male" {
                "Husband"
            } else {
                "Wife"
            }
        } else {
            let wts = [0, 0, 30, 40, 10, 20];
            pick(&mut rng, &RELATIONSHIP, &wts)
        };
        let race = pick(&mut rng, &RACE, &[800, 96, 32, 10, 62]);
        let capital_gain = if rng.random_range(0..1000) < p.gain_permille {
            rng.random_range(2..=40) * 500
        } else {
            0
        };
        let capital_loss = if rng.random_range(0..1000) < 40 {
            rng.random_range(10..=25) * 100
        } else {
            0
        };
        let hours = jitter(&mut rng, p.hours_base, p.hours_spread, 1, 99);
        let country = if rng.random_range(0..1000) < 18 {
            "?"
        } else if rng.random_range(0..1000) < p.foreign_permille {
            COUNTRY[rng.random_range(1..COUNTRY.len())]
        } else {
            COUNTRY[0]
        };
        let class = if rng.random_range(0..1000) < p.high_income_permille {
            ">50K"
        } else {
            "<=50K"
        };
        writeln!(
            w,
            "{age},{workclass},{fnlwgt},{education},{education_num},{marital},{occupation},\
             {relationship},{race},{sex},{capital_gain},{capital_loss},{hours},{country},{class}"
        )?;
    }
    w.flush()
}
