//! OTB-format sequences: an image folder plus `groundtruth_rect.txt`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::BBox;
use crate::features::Frame;
use crate::{Error, Result};

pub const GROUND_TRUTH_FILE: &str = "groundtruth_rect.txt";
const IMAGE_EXTENSIONS: [&str; 3] = ["jpg", "jpeg", "png"];

#[derive(Clone, Debug)]
pub enum Frames {
    Files(Vec<PathBuf>),
    Memory(Arc<Vec<Frame>>),
}

#[derive(Clone, Debug)]
pub struct Sequence {
    pub name: String,
    pub frames: Frames,
    pub ground_truth: Vec<BBox>,
    pub attributes: Vec<String>,
}

impl Sequence {
    /// In-memory sequence; frame and box counts must agree.
    pub fn from_frames(name: impl Into<String>, frames: Vec<Frame>, ground_truth: Vec<BBox>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Data("sequence has no frames".into()));
        }
        if frames.len() != ground_truth.len() {
            return Err(Error::Data(format!(
                "{} frames but {} ground-truth boxes",
                frames.len(),
                ground_truth.len()
            )));
        }
        Ok(Sequence {
            name: name.into(),
            frames: Frames::Memory(Arc::new(frames)),
            ground_truth,
            attributes: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.ground_truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ground_truth.is_empty()
    }

    pub fn frame(&self, index: usize) -> Result<Frame> {
        match &self.frames {
            Frames::Files(paths) => {
                let path = paths
                    .get(index)
                    .ok_or_else(|| Error::Data(format!("frame {index} out of range")))?;
                Frame::load(path)
            }
            Frames::Memory(frames) => frames
                .get(index)
                .cloned()
                .ok_or_else(|| Error::Data(format!("frame {index} out of range"))),
        }
    }
}

/// Parses ground-truth rows of four numbers separated by commas, tabs or
/// spaces. Blank lines are ignored; anything else malformed is an error
/// naming its 1-based line.
pub fn parse_ground_truth(text: &str, path: &Path) -> Result<Vec<BBox>> {
    let mut boxes = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        let parse_err = |reason: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            reason,
        };
        if fields.len() != 4 {
            return Err(parse_err(format!("expected 4 values, found {}", fields.len())));
        }
        let mut v = [0.0; 4];
        for (slot, field) in v.iter_mut().zip(&fields) {
            *slot = field
                .parse::<f64>()
                .map_err(|_| parse_err(format!("`{field}` is not a number")))?;
        }
        boxes.push(BBox::new(v[0], v[1], v[2], v[3]));
    }
    Ok(boxes)
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut frames: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_image(p))
        .collect();
    // numeric stems compare by value so unpadded names still order correctly
    frames.sort_by(|a, b| {
        let key = |p: &PathBuf| {
            let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("").to_string();
            (stem.parse::<u64>().ok(), stem)
        };
        key(a).cmp(&key(b))
    });
    Ok(frames)
}

/// Loads an OTB sequence directory. Images come from `img/` when present,
/// otherwise from the first subdirectory holding images, otherwise from the
/// directory itself.
pub fn load_otb(dir: &Path) -> Result<Sequence> {
    let gt_path = dir.join(GROUND_TRUTH_FILE);
    if !gt_path.is_file() {
        return Err(Error::Data(format!("missing {}", gt_path.display())));
    }
    let ground_truth = parse_ground_truth(&std::fs::read_to_string(&gt_path)?, &gt_path)?;

    let mut frames = Vec::new();
    let img = dir.join("img");
    if img.is_dir() {
        frames = list_images(&img)?;
    }
    if frames.is_empty() {
        let mut subdirs: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        subdirs.sort();
        for sub in subdirs {
            frames = list_images(&sub)?;
            if !frames.is_empty() {
                break;
            }
        }
    }
    if frames.is_empty() {
        frames = list_images(dir)?;
    }
    if frames.is_empty() {
        return Err(Error::Data(format!("no frames found under {}", dir.display())));
    }
    if ground_truth.is_empty() {
        return Err(Error::Data(format!("{} has no boxes", gt_path.display())));
    }

    let mut ground_truth = ground_truth;
    if frames.len() != ground_truth.len() {
        let n = frames.len().min(ground_truth.len());
        log::warn!(
            "{}: {} frames vs {} ground-truth rows, truncating to {n}",
            dir.display(),
            frames.len(),
            ground_truth.len()
        );
        frames.truncate(n);
        ground_truth.truncate(n);
    }

    let attributes = std::fs::read_to_string(dir.join("attributes.txt"))
        .map(|s| {
            s.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(str::to_string)
                .collect()
        })
        .unwrap_or_default();
    let name = dir
        .canonicalize()
        .ok()
        .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "sequence".into());

    Ok(Sequence {
        name,
        frames: Frames::Files(frames),
        ground_truth,
        attributes,
    })
}

/// A sequence directory, or a directory whose subdirectories are sequences.
pub fn load_collection(dir: &Path) -> Result<Vec<Sequence>> {
    if dir.join(GROUND_TRUTH_FILE).is_file() {
        return Ok(vec![load_otb(dir)?]);
    }
    let mut subdirs: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::Data(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(GROUND_TRUTH_FILE).is_file())
        .collect();
    subdirs.sort();
    if subdirs.is_empty() {
        return Err(Error::Data(format!("no OTB sequences under {}", dir.display())));
    }
    subdirs.iter().map(|d| load_otb(d)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(gt: &str, frames: usize) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("img")).unwrap();
        for i in 0..frames {
            let f = Frame::from_fn(8, 6, |x, y| ((x + y + i) % 5) as f32 / 4.0).unwrap();
            f.save_png(&dir.path().join("img").join(format!("{:04}.png", i + 1))).unwrap();
        }
        std::fs::write(dir.path().join(GROUND_TRUTH_FILE), gt).unwrap();
        dir
    }

    #[test]
    fn four_frame_round_trip() {
        let dir = fixture("1,2,3,4\n2,3,4,5\n3,4,5,6\n4,5,6,7\n", 4);
        let seq = load_otb(dir.path()).unwrap();
        assert_eq!(seq.len(), 4);
        assert_eq!(seq.ground_truth[2], BBox::new(3.0, 4.0, 5.0, 6.0));
        assert_eq!(seq.frame(3).unwrap().width(), 8);
        match &seq.frames {
            Frames::Files(p) => assert!(p[0].ends_with("img/0001.png")),
            _ => unreachable!(),
        }
    }

    #[test]
    fn tab_and_space_separated() {
        let p = Path::new("gt");
        let comma = parse_ground_truth("1,2,3,4\n5,6,7,8", p).unwrap();
        assert_eq!(parse_ground_truth("1\t2\t3\t4\n5\t6\t7\t8\n", p).unwrap(), comma);
        assert_eq!(parse_ground_truth("1 2 3 4\n\n5  6 7 8\n", p).unwrap(), comma);
    }

    #[test]
    fn header_row_names_line_one() {
        match parse_ground_truth("x,y,w,h\n1,2,3,4\n", Path::new("gt")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
        match parse_ground_truth("1,2,3,4\n1,2,3\n", Path::new("gt")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn count_mismatch_truncates() {
        let dir = fixture("1,2,3,4\n2,3,4,5\n3,4,5,6\n", 5);
        assert_eq!(load_otb(dir.path()).unwrap().len(), 3);
    }

    #[test]
    fn missing_ground_truth_and_frames() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_otb(dir.path()), Err(Error::Data(_))));
        std::fs::write(dir.path().join(GROUND_TRUTH_FILE), "1,2,3,4\n").unwrap();
        assert!(matches!(load_otb(dir.path()), Err(Error::Data(_))));
    }

    #[test]
    fn unpadded_names_sort_numerically() {
        let dir = tempfile::tempdir().unwrap();
        for i in [1, 2, 10] {
            Frame::from_fn(4, 4, |_, _| 0.5)
                .unwrap()
                .save_png(&dir.path().join(format!("{i}.png")))
                .unwrap();
        }
        let names: Vec<_> = list_images(dir.path())
            .unwrap()
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(names, ["1.png", "2.png", "10.png"]);
    }
}
