//! CSV formats: tool paths as `t,x,y,z,nx,ny,nz` rows (the bit-exact
//! reference for paths) and correspondence sets as `x1,y1,z1,x2,y2,z2`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::geometry::{Point3, Vec3};
use crate::planner::{IncisionPath, ToolPose};

use super::FormatError;

const PATH_HEADER: &str = "t,x,y,z,nx,ny,nz";

pub fn write_path_csv(path: &Path, incision: &IncisionPath) -> Result<(), FormatError> {
    let file = File::create(path).map_err(|e| FormatError::io(path, e))?;
    let mut w = BufWriter::new(file);
    (|| -> std::io::Result<()> {
        writeln!(w, "{PATH_HEADER}")?;
        for (pose, t) in incision.poses.iter().zip(&incision.timestamps_s) {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                t,
                pose.position.x,
                pose.position.y,
                pose.position.z,
                pose.axis.x,
                pose.axis.y,
                pose.axis.z
            )?;
        }
        w.flush()
    })()
    .map_err(|e| FormatError::io(path, e))
}

/// Reads a path CSV back. Speed and perimeter are reconstructed from the
/// samples (the JSON export carries them as authored metadata).
pub fn read_path_csv(path: &Path) -> Result<IncisionPath, FormatError> {
    let file = File::open(path).map_err(|e| FormatError::io(path, e))?;
    let reader = BufReader::new(file);
    let mut poses = Vec::new();
    let mut timestamps = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| FormatError::io(path, e))?;
        if i == 0 {
            if line.trim() != PATH_HEADER {
                return Err(FormatError::parse(path, 1, "unexpected header"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(FormatError::parse(path, i + 1, "expected 7 fields"));
        }
        let nums: Result<Vec<f64>, _> = fields.iter().map(|f| f.trim().parse::<f64>()).collect();
        let nums =
            nums.map_err(|_| FormatError::parse(path, i + 1, "bad float"))?;
        timestamps.push(nums[0]);
        poses.push(ToolPose {
            position: Point3::new(nums[1], nums[2], nums[3]),
            axis: Vec3::new(nums[4], nums[5], nums[6]),
        });
    }
    if poses.len() < 3 {
        return Err(FormatError::structure(path, "path needs at least 3 poses"));
    }
    let mut perimeter = 0.0;
    for i in 0..poses.len() {
        perimeter += poses[i]
            .position
            .distance(&poses[(i + 1) % poses.len()].position);
    }
    let speed = if timestamps[1] > timestamps[0] {
        poses[0].position.distance(&poses[1].position) / (timestamps[1] - timestamps[0])
    } else {
        0.0
    };
    Ok(IncisionPath {
        total_time_s: if speed > 0.0 { perimeter / speed } else { 0.0 },
        poses,
        timestamps_s: timestamps,
        closed: true,
        speed_mm_s: speed,
        perimeter_mm: perimeter,
    })
}

pub fn write_correspondences_csv(
    path: &Path,
    pairs: &[(Point3, Point3)],
) -> Result<(), FormatError> {
    let file = File::create(path).map_err(|e| FormatError::io(path, e))?;
    let mut w = BufWriter::new(file);
    (|| -> std::io::Result<()> {
        writeln!(w, "x1,y1,z1,x2,y2,z2")?;
        for (a, b) in pairs {
            writeln!(w, "{},{},{},{},{},{}", a.x, a.y, a.z, b.x, b.y, b.z)?;
        }
        w.flush()
    })()
    .map_err(|e| FormatError::io(path, e))
}

pub fn read_correspondences_csv(path: &Path) -> Result<Vec<(Point3, Point3)>, FormatError> {
    let file = File::open(path).map_err(|e| FormatError::io(path, e))?;
    let reader = BufReader::new(file);
    let mut pairs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| FormatError::io(path, e))?;
        if i == 0 && line.trim().starts_with('x') {
            continue; // header
        }
        if line.trim().is_empty() {
            continue;
        }
        let nums: Result<Vec<f64>, _> =
            line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        let nums = nums.map_err(|_| FormatError::parse(path, i + 1, "bad float"))?;
        if nums.len() != 6 {
            return Err(FormatError::parse(path, i + 1, "expected 6 fields"));
        }
        pairs.push((
            Point3::new(nums[0], nums[1], nums[2]),
            Point3::new(nums[3], nums[4], nums[5]),
        ));
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn sample_path() -> IncisionPath {
        let n = 16;
        let mut poses = Vec::new();
        let mut timestamps = Vec::new();
        for i in 0..n {
            let a = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            poses.push(ToolPose {
                position: Point3::new(10.0 * a.cos(), 10.0 * a.sin(), 1.0),
                axis: Vec3::Z,
            });
            timestamps.push(i as f64 * 0.5);
        }
        IncisionPath {
            poses,
            timestamps_s: timestamps,
            closed: true,
            speed_mm_s: 2.0,
            perimeter_mm: 62.0,
            total_time_s: 31.0,
        }
    }

    #[test]
    fn path_csv_round_trips_bit_exactly() {
        let dir = tempdir().unwrap();
        let p1 = dir.path().join("path.csv");
        let path = sample_path();
        write_path_csv(&p1, &path).unwrap();
        let reread = read_path_csv(&p1).unwrap();
        assert_eq!(reread.poses, path.poses);
        assert_eq!(reread.timestamps_s, path.timestamps_s);
        let p2 = dir.path().join("path2.csv");
        write_path_csv(&p2, &reread).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn correspondences_round_trip() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("corr.csv");
        let pairs = vec![
            (Point3::new(0.1, 0.2, 0.3), Point3::new(1.0, 2.0, 3.0)),
            (Point3::new(-4.5, 6.25, -0.125), Point3::new(0.0, 0.0, 1.0)),
        ];
        write_correspondences_csv(&p, &pairs).unwrap();
        assert_eq!(read_correspondences_csv(&p).unwrap(), pairs);
    }

    #[test]
    fn bad_rows_are_errors() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "t,x,y,z,nx,ny,nz\n1,2,3\n").unwrap();
        assert!(read_path_csv(&p).is_err());
    }
}
