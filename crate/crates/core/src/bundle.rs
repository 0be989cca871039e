//! On-disk dataset format.
//!
//! A bundle is a directory:
//!
//! ```text
//! manifest.json          {"vocabulary": "vocabulary.json", "videos": [{"video_id", "graph", "masks"}]}
//! vocabulary.json        {"object_classes": [{"name", "kind"}], "predicate_classes": [...]}
//! videos/<id>.graph.json {video_id, T, H, W, fps?, objects: [{id, class, is_thing, score?}],
//!                         relations: [{subject, object, predicate, spans: [[s, e], ...], score?}]}
//! videos/<id>.masks.json {video_id, T, H, W, frames: [{frame, segments: [{id, class, confidence, rle, h, w}]}]}
//! ```
//!
//! Spans are half-open frame intervals. Masks are row-major run lengths
//! starting with a background run. All output is written with a fixed key
//! order and shortest round-trip floats, so equal inputs give equal bytes.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClassId, EntityId, MaskTube, PredicateId, RelationTriplet, SceneGraph, VideoMeta, Vocabulary};
use crate::rle::{BinaryMask, PanopticFrame, PanopticSegment};
use crate::span::{Frame, TimeSpan};

pub const MANIFEST: &str = "manifest.json";
pub const VOCABULARY: &str = "vocabulary.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectDoc {
    pub id: EntityId,
    pub class: ClassId,
    pub is_thing: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationDoc {
    pub subject: EntityId,
    pub object: EntityId,
    pub predicate: PredicateId,
    pub spans: TimeSpan,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphDoc {
    pub video_id: String,
    #[serde(rename = "T")]
    pub num_frames: u32,
    #[serde(rename = "H")]
    pub height: u32,
    #[serde(rename = "W")]
    pub width: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fps: Option<f64>,
    pub objects: Vec<ObjectDoc>,
    #[serde(default)]
    pub relations: Vec<RelationDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentDoc {
    pub id: EntityId,
    pub class: ClassId,
    pub confidence: f64,
    pub rle: Vec<u32>,
    pub h: u32,
    pub w: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameDoc {
    pub frame: Frame,
    pub segments: Vec<SegmentDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskDoc {
    pub video_id: String,
    #[serde(rename = "T")]
    pub num_frames: u32,
    #[serde(rename = "H")]
    pub height: u32,
    #[serde(rename = "W")]
    pub width: u32,
    pub frames: Vec<FrameDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestVideo {
    pub video_id: String,
    pub graph: String,
    pub masks: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub vocabulary: String,
    pub videos: Vec<ManifestVideo>,
}

fn pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

/// Parses `text`, naming `file` in errors. Syntax errors report line and
/// column; type and schema errors report a JSON pointer.
pub fn parse_json<T: DeserializeOwned>(text: &str, file: &str) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let ptr = pointer(e.path());
        let inner = e.into_inner();
        match inner.classify() {
            serde_json::error::Category::Data => Error::Schema { file: file.to_string(), pointer: ptr, message: inner.to_string() },
            _ => Error::Parse { file: file.to_string(), line: inner.line(), column: inner.column(), message: inner.to_string() },
        }
    })?;
    de.end().map_err(|e| Error::Parse { file: file.to_string(), line: e.line(), column: e.column(), message: e.to_string() })?;
    Ok(value)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    parse_json(&text, &path.display().to_string())
}

/// Indented JSON with a trailing newline.
pub fn to_json_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

/// Single-line JSON with a trailing newline; used for mask documents.
pub fn to_json_compact<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string(value).expect("serializable value");
    s.push('\n');
    s
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| Error::Io { path: parent.to_path_buf(), source })?;
    }
    fs::write(path, contents).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

fn check_video_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id != "."
        && id != ".."
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if ok {
        Ok(())
    } else {
        Err(Error::invalid(format!("video id {id:?} is not usable as a file name")))
    }
}

/// Splits a graph into its scene-graph and mask documents. Segment confidence
/// is the tube score.
pub fn graph_to_docs(g: &SceneGraph) -> (GraphDoc, MaskDoc) {
    let meta = &g.meta;
    let graph = GraphDoc {
        video_id: meta.video_id.clone(),
        num_frames: meta.num_frames,
        height: meta.height,
        width: meta.width,
        fps: (meta.fps != 0.0).then_some(meta.fps),
        objects: g
            .tubes
            .iter()
            .map(|t| ObjectDoc {
                id: t.entity_id,
                class: t.class_id,
                is_thing: t.is_thing,
                score: (t.score != 1.0).then_some(t.score),
            })
            .collect(),
        relations: g
            .relations
            .iter()
            .map(|r| RelationDoc {
                subject: r.subject_id,
                object: r.object_id,
                predicate: r.predicate_id,
                spans: r.span.clone(),
                score: Some(r.score),
            })
            .collect(),
    };
    let mut by_frame: BTreeMap<Frame, Vec<SegmentDoc>> = (0..meta.num_frames).map(|t| (t, Vec::new())).collect();
    let mut order: Vec<&MaskTube> = g.tubes.iter().collect();
    order.sort_by_key(|t| t.entity_id);
    for tube in order {
        for (&t, m) in &tube.frames {
            by_frame.entry(t).or_default().push(SegmentDoc {
                id: tube.entity_id,
                class: tube.class_id,
                confidence: tube.score,
                rle: m.runs().to_vec(),
                h: m.height(),
                w: m.width(),
            });
        }
    }
    let masks = MaskDoc {
        video_id: meta.video_id.clone(),
        num_frames: meta.num_frames,
        height: meta.height,
        width: meta.width,
        frames: by_frame.into_iter().map(|(frame, segments)| FrameDoc { frame, segments }).collect(),
    };
    (graph, masks)
}

fn schema(file: &str, pointer: String, message: impl Into<String>) -> Error {
    Error::Schema { file: file.to_string(), pointer, message: message.into() }
}

fn check_header(doc: &MaskDoc, meta: &VideoMeta, file: &str) -> Result<()> {
    if doc.video_id != meta.video_id {
        return Err(schema(file, "/video_id".into(), format!("expected {:?}, found {:?}", meta.video_id, doc.video_id)));
    }
    for (key, found, expected) in [("T", doc.num_frames, meta.num_frames), ("H", doc.height, meta.height), ("W", doc.width, meta.width)] {
        if found != expected {
            return Err(schema(file, format!("/{key}"), format!("expected {expected}, found {found}")));
        }
    }
    Ok(())
}

fn segment_mask(s: &SegmentDoc, file: &str, ptr: String) -> Result<BinaryMask> {
    BinaryMask::from_runs(s.h, s.w, s.rle.clone()).map_err(|e| schema(file, ptr, e.to_string()))
}

/// Joins the two documents of a video. Structural problems (unknown ids,
/// class disagreement, bad runs) are errors; content problems such as
/// overlapping masks are left for validation.
pub fn docs_to_graph(graph: &GraphDoc, masks: &MaskDoc, masks_file: &str) -> Result<SceneGraph> {
    let mut meta = VideoMeta::new(graph.video_id.clone(), graph.num_frames, graph.height, graph.width)?;
    meta.fps = graph.fps.unwrap_or(0.0);
    check_header(masks, &meta, masks_file)?;
    let mut tubes: Vec<MaskTube> = graph
        .objects
        .iter()
        .map(|o| MaskTube { is_thing: o.is_thing, score: o.score.unwrap_or(1.0), ..MaskTube::new(o.id, o.class) })
        .collect();
    let index: BTreeMap<EntityId, usize> = tubes.iter().enumerate().rev().map(|(i, t)| (t.entity_id, i)).collect();
    for (fi, f) in masks.frames.iter().enumerate() {
        for (si, s) in f.segments.iter().enumerate() {
            let at = |field: &str| format!("/frames/{fi}/segments/{si}/{field}");
            let Some(&ti) = index.get(&s.id) else {
                return Err(schema(masks_file, at("id"), format!("entity {} is not listed in the scene graph", s.id)));
            };
            if tubes[ti].class_id != s.class {
                return Err(schema(
                    masks_file,
                    at("class"),
                    format!("entity {} has class {} in the scene graph", s.id, tubes[ti].class_id),
                ));
            }
            let mask = segment_mask(s, masks_file, at("rle"))?;
            if tubes[ti].frames.insert(f.frame, mask).is_some() {
                return Err(schema(masks_file, at("id"), format!("entity {} appears twice in frame {}", s.id, f.frame)));
            }
        }
    }
    let relations = graph
        .relations
        .iter()
        .map(|r| RelationTriplet {
            subject_id: r.subject,
            object_id: r.object,
            predicate_id: r.predicate,
            span: r.spans.clone(),
            score: r.score.unwrap_or(1.0),
        })
        .collect();
    Ok(SceneGraph { meta, tubes, relations })
}

/// Per-frame panoptic input for tracking, sorted by frame index.
pub fn mask_doc_frames(masks: &MaskDoc, file: &str) -> Result<Vec<PanopticFrame>> {
    let mut frames: Vec<PanopticFrame> = Vec::with_capacity(masks.frames.len());
    for (fi, f) in masks.frames.iter().enumerate() {
        let mut segments = Vec::with_capacity(f.segments.len());
        for (si, s) in f.segments.iter().enumerate() {
            let mask = segment_mask(s, file, format!("/frames/{fi}/segments/{si}/rle"))?;
            segments.push(PanopticSegment { entity_id: s.id, class_id: s.class, confidence: s.confidence, mask });
        }
        frames.push(PanopticFrame { frame_index: f.frame, segments });
    }
    frames.sort_by_key(|f| f.frame_index);
    if let Some(w) = frames.windows(2).find(|w| w[0].frame_index == w[1].frame_index) {
        return Err(schema(file, "/frames".into(), format!("frame {} listed twice", w[0].frame_index)));
    }
    Ok(frames)
}

/// Raw documents of one bundle video.
#[derive(Clone, Debug)]
pub struct VideoDocs {
    pub graph: GraphDoc,
    pub masks: MaskDoc,
    pub masks_file: String,
}

#[derive(Clone, Debug)]
pub struct Bundle {
    pub vocabulary: Vocabulary,
    pub graphs: Vec<SceneGraph>,
}

fn first_error<T>(items: Vec<Result<T>>) -> Result<Vec<T>> {
    items.into_iter().collect()
}

/// Reads the manifest, vocabulary and every video's documents. Videos are
/// parsed in parallel; the first failing video (in manifest order) is
/// reported.
pub fn read_bundle_docs(dir: &Path) -> Result<(Vocabulary, Vec<VideoDocs>)> {
    let manifest: Manifest = read_json(&dir.join(MANIFEST))?;
    let vocabulary: Vocabulary = read_json(&dir.join(&manifest.vocabulary))?;
    let mut seen = BTreeSet::new();
    for v in &manifest.videos {
        if !seen.insert(v.video_id.as_str()) {
            return Err(Error::invalid(format!("{}: video {} listed twice", dir.join(MANIFEST).display(), v.video_id)));
        }
    }
    let docs = manifest
        .videos
        .par_iter()
        .map(|v| {
            let graph_path = dir.join(&v.graph);
            let masks_path = dir.join(&v.masks);
            let graph: GraphDoc = read_json(&graph_path)?;
            if graph.video_id != v.video_id {
                return Err(schema(
                    &graph_path.display().to_string(),
                    "/video_id".into(),
                    format!("manifest lists this document as {:?}", v.video_id),
                ));
            }
            let masks: MaskDoc = read_json(&masks_path)?;
            Ok(VideoDocs { graph, masks, masks_file: masks_path.display().to_string() })
        })
        .collect();
    Ok((vocabulary, first_error(docs)?))
}

pub fn read_bundle(dir: &Path) -> Result<Bundle> {
    let (vocabulary, docs) = read_bundle_docs(dir)?;
    let graphs = docs.par_iter().map(|d| docs_to_graph(&d.graph, &d.masks, &d.masks_file)).collect();
    Ok(Bundle { vocabulary, graphs: first_error(graphs)? })
}

pub fn graph_file(video_id: &str) -> String {
    format!("videos/{video_id}.graph.json")
}

pub fn masks_file(video_id: &str) -> String {
    format!("videos/{video_id}.masks.json")
}

/// Writes `graphs` as a bundle under `dir`, in the given order.
pub fn write_bundle(dir: &Path, vocabulary: &Vocabulary, graphs: &[SceneGraph]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for g in graphs {
        check_video_id(&g.meta.video_id)?;
        if !seen.insert(g.meta.video_id.as_str()) {
            return Err(Error::invalid(format!("video {} appears twice", g.meta.video_id)));
        }
    }
    let manifest = Manifest {
        vocabulary: VOCABULARY.to_string(),
        videos: graphs
            .iter()
            .map(|g| ManifestVideo {
                video_id: g.meta.video_id.clone(),
                graph: graph_file(&g.meta.video_id),
                masks: masks_file(&g.meta.video_id),
            })
            .collect(),
    };
    let rendered: Vec<(PathBuf, String, PathBuf, String)> = graphs
        .par_iter()
        .map(|g| {
            let (gd, md) = graph_to_docs(g);
            let id = &g.meta.video_id;
            (dir.join(graph_file(id)), to_json_pretty(&gd), dir.join(masks_file(id)), to_json_compact(&md))
        })
        .collect();
    write_file(&dir.join(MANIFEST), &to_json_pretty(&manifest))?;
    write_file(&dir.join(VOCABULARY), &to_json_pretty(vocabulary))?;
    for (gp, gs, mp, ms) in rendered {
        write_file(&gp, &gs)?;
        write_file(&mp, &ms)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, random_script, ScriptParams};

    fn sample() -> (SceneGraph, Vocabulary) {
        let s = random_script(3, &ScriptParams { num_frames: 8, ..Default::default() }).unwrap();
        (generate(&s, 3).unwrap().graph, s.vocabulary())
    }

    #[test]
    fn documents_roundtrip() {
        let (g, _) = sample();
        let (gd, md) = graph_to_docs(&g);
        let gd2: GraphDoc = parse_json(&to_json_pretty(&gd), "g").unwrap();
        let md2: MaskDoc = parse_json(&to_json_compact(&md), "m").unwrap();
        assert_eq!(docs_to_graph(&gd2, &md2, "m").unwrap(), g);
    }

    #[test]
    fn bundle_roundtrip_is_byte_stable() {
        let (g, vocab) = sample();
        let dir = tempfile::tempdir().unwrap();
        write_bundle(dir.path(), &vocab, &[g.clone()]).unwrap();
        let b = read_bundle(dir.path()).unwrap();
        assert_eq!(b.graphs, vec![g]);
        assert_eq!(b.vocabulary, vocab);
        let again = tempfile::tempdir().unwrap();
        write_bundle(again.path(), &b.vocabulary, &b.graphs).unwrap();
        for f in [MANIFEST.to_string(), VOCABULARY.to_string(), graph_file("synth_000003"), masks_file("synth_000003")] {
            assert_eq!(fs::read(dir.path().join(&f)).unwrap(), fs::read(again.path().join(&f)).unwrap(), "{f}");
        }
    }

    #[test]
    fn syntax_error_has_line_and_column() {
        let err = parse_json::<GraphDoc>("{\n  \"video_id\": \"a\",\n  \"T\": ,\n}", "x.json").unwrap_err();
        match err {
            Error::Parse { file, line, column, .. } => assert_eq!((file.as_str(), line, column), ("x.json", 3, 8)),
            e => panic!("unexpected {e}"),
        }
        let truncated = parse_json::<MaskDoc>("{\"video_id\": \"a\", \"frames\": [", "m.json").unwrap_err();
        assert!(matches!(truncated, Error::Parse { line: 1, .. }), "{truncated}");
    }

    #[test]
    fn schema_error_has_pointer() {
        let text = r#"{"video_id":"a","T":2,"H":2,"W":2,"objects":[{"id":0,"class":"cat","is_thing":true}]}"#;
        match parse_json::<GraphDoc>(text, "g.json").unwrap_err() {
            Error::Schema { pointer, .. } => assert_eq!(pointer, "/objects/0/class"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn unknown_segment_id_is_reported() {
        let (g, _) = sample();
        let (gd, mut md) = graph_to_docs(&g);
        md.frames[1].segments[0].id = 99;
        match docs_to_graph(&gd, &md, "m.json").unwrap_err() {
            Error::Schema { pointer, .. } => assert_eq!(pointer, "/frames/1/segments/0/id"),
            e => panic!("unexpected {e}"),
        }
        let (gd, mut md) = graph_to_docs(&g);
        md.frames[0].segments[0].rle.push(1_000_000);
        assert!(matches!(docs_to_graph(&gd, &md, "m.json"), Err(Error::Schema { .. })));
        let (gd, mut md) = graph_to_docs(&g);
        md.height += 1;
        assert!(matches!(docs_to_graph(&gd, &md, "m.json"), Err(Error::Schema { pointer, .. }) if pointer == "/H"));
    }

    #[test]
    fn unsafe_video_ids_rejected() {
        let (mut g, vocab) = sample();
        g.meta.video_id = "../up".into();
        let dir = tempfile::tempdir().unwrap();
        assert!(write_bundle(dir.path(), &vocab, &[g]).is_err());
    }
}
