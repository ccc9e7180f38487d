//! JSON-lines scene files and JSON config loading.
//!
//! One scene per line. Keys are emitted in a fixed order and floats use the
//! shortest decimal that round-trips, so `write(read(f)) == f` byte for byte
//! on any file this module wrote.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Scene;

pub fn read_scenes(path: impl AsRef<Path>) -> Result<Vec<Scene>> {
    let reader = BufReader::new(File::open(path)?);
    parse_scenes(reader)
}

/// Parses and validates scenes from any line-oriented reader. Blank lines are
/// skipped; line numbers in errors are 1-based.
pub fn parse_scenes(reader: impl BufRead) -> Result<Vec<Scene>> {
    let mut scenes = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let scene: Scene = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        scene.validate().map_err(|e| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        scenes.push(scene);
    }
    Ok(scenes)
}

pub fn write_scenes(scenes: &[Scene], path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    emit_scenes(scenes, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn emit_scenes(scenes: &[Scene], out: &mut impl Write) -> Result<()> {
    for scene in scenes {
        scene.validate()?;
        serde_json::to_writer(&mut *out, scene).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn scenes_to_string(scenes: &[Scene]) -> Result<String> {
    let mut buf = Vec::new();
    emit_scenes(scenes, &mut buf)?;
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE_LANE: &str = r#"{"frame_id":"f0","camera":{"height_m":1.78,"pitch_rad":0.0,"intrinsics":{"fx":1000.0,"fy":1000.0,"cx":960.0,"cy":540.0,"width_px":1920,"height_px":1080}},"lanes":[{"id":"a","points":[[1.0,5.0,0.0],[1.0,10.0,0.1],[1.0,15.0,0.25]],"visibility":[1,1,0]}],"metadata":{}}"#;

    #[test]
    fn reads_minimal_line() {
        let scenes = parse_scenes(ONE_LANE.as_bytes()).unwrap();
        assert_eq!(scenes.len(), 1);
        assert_eq!(scenes[0].lanes.len(), 1);
        assert_eq!(scenes[0].lanes[0].points.len(), 3);
    }

    #[test]
    fn canonical_line_is_reproduced() {
        let scenes = parse_scenes(ONE_LANE.as_bytes()).unwrap();
        assert_eq!(scenes_to_string(&scenes).unwrap(), format!("{ONE_LANE}\n"));
    }

    #[test]
    fn non_monotone_lane_reports_line_and_id() {
        let bad = ONE_LANE.replace("[1.0,10.0,0.1]", "[1.0,2.0,0.1]");
        let text = format!("{ONE_LANE}\n{bad}\n");
        let err = parse_scenes(text.as_bytes()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{msg}");
        assert!(msg.contains("'a'"), "{msg}");
    }

    #[test]
    fn malformed_json_reports_line() {
        let err = parse_scenes("\n{not json}\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn empty_list_writes_empty_text() {
        assert_eq!(scenes_to_string(&[]).unwrap(), "");
    }
}
