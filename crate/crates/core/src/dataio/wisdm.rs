use std::path::Path;

use super::ClassId;
use crate::{Error, Result};

/// WISDM2019 activity letters and names, in dataset documentation order.
/// The class id of an activity is its index here. There is no letter `N`.
pub const ACTIVITIES: [(char, &str); 18] = [
    ('A', "Walking"),
    ('B', "Jogging"),
    ('C', "Stairs"),
    ('D', "Sitting"),
    ('E', "Standing"),
    ('F', "Typing"),
    ('G', "Brushing Teeth"),
    ('H', "Eating Soup"),
    ('I', "Eating Chips"),
    ('J', "Eating Pasta"),
    ('K', "Drinking from Cup"),
    ('L', "Eating Sandwich"),
    ('M', "Kicking (Soccer Ball)"),
    ('O', "Playing Catch with Tennis Ball"),
    ('P', "Dribbling (Basketball)"),
    ('Q', "Writing"),
    ('R', "Clapping"),
    ('S', "Folding Clothes"),
];

pub fn activity_code(letter: char) -> Option<ClassId> {
    ACTIVITIES.iter().position(|&(c, _)| c == letter)
}

pub fn activity_name(class: ClassId) -> Option<&'static str> {
    ACTIVITIES.get(class).map(|&(_, n)| n)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Reading {
    pub timestamp: i64,
    pub xyz: [f64; 3],
}

/// One contiguous run of readings from a single subject and activity.
#[derive(Clone, Debug, PartialEq)]
pub struct RawRecording {
    pub subject_id: u32,
    pub activity: ClassId,
    pub samples: Vec<Reading>,
}

pub fn parse_wisdm(path: impl AsRef<Path>) -> Result<Vec<RawRecording>> {
    let text = std::fs::read_to_string(path)?;
    parse_wisdm_str(&text)
}

/// Parses `subject,activity,timestamp,x,y,z;` lines.
///
/// Consecutive lines with the same subject and activity form one
/// recording. Readings whose timestamp does not advance past the previous
/// reading of the same recording are skipped.
pub fn parse_wisdm_str(text: &str) -> Result<Vec<RawRecording>> {
    let mut out: Vec<RawRecording> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let line = line.strip_suffix(';').unwrap_or(line);
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 6 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected 6 comma-separated fields, found {}", fields.len()),
            });
        }
        let parse_err = |what: &str, v: &str| Error::Parse {
            line: line_no,
            msg: format!("invalid {what} `{v}`"),
        };
        let subject: u32 = fields[0].parse().map_err(|_| parse_err("subject id", fields[0]))?;
        let mut letters = fields[1].chars();
        let activity = match (letters.next(), letters.next()) {
            (Some(c), None) => activity_code(c),
            _ => None,
        }
        .ok_or_else(|| Error::UnknownActivity {
            line: line_no,
            code: fields[1].to_string(),
        })?;
        let timestamp: i64 = fields[2].parse().map_err(|_| parse_err("timestamp", fields[2]))?;
        let mut xyz = [0.0f64; 3];
        for (k, v) in xyz.iter_mut().enumerate() {
            let f = fields[3 + k];
            *v = f.parse().map_err(|_| parse_err("reading", f))?;
            if !v.is_finite() {
                return Err(parse_err("reading", f));
            }
        }
        let reading = Reading { timestamp, xyz };
        match out.last_mut() {
            Some(rec) if rec.subject_id == subject && rec.activity == activity => {
                if rec.samples.last().is_none_or(|p| timestamp > p.timestamp) {
                    rec.samples.push(reading);
                }
            }
            _ => out.push(RawRecording {
                subject_id: subject,
                activity,
                samples: vec![reading],
            }),
        }
    }
    Ok(out)
}
