//! Scene descriptor (XML) and Wavefront OBJ loading.
//!
//! ```xml
//! <scene>
//!   <material name="concrete" permittivity="5.24" conductivity="0.163"/>
//!   <shape obj="floor.obj" material="concrete"/>
//! </scene>
//! ```
//!
//! OBJ paths are resolved relative to the descriptor. Only `v` and `f`
//! records are read; polygons are fan-triangulated.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::geometry::Vec3;

use super::{Material, Scene, SceneError, Triangle, MIN_TRIANGLE_AREA};

pub fn load_scene(descriptor_path: impl AsRef<Path>) -> Result<Scene, SceneError> {
    let path = descriptor_path.as_ref();
    let shown = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| SceneError::Io {
        path: shown.clone(),
        source,
    })?;
    let doc = roxmltree::Document::parse(&text).map_err(|e| SceneError::Descriptor {
        path: shown.clone(),
        message: e.to_string(),
    })?;
    let root = doc.root_element();
    if root.tag_name().name() != "scene" {
        return Err(SceneError::Descriptor {
            path: shown,
            message: format!("root element is <{}>, expected <scene>", root.tag_name().name()),
        });
    }

    let attr = |node: roxmltree::Node, name: &str| -> Result<String, SceneError> {
        node.attribute(name)
            .map(str::to_owned)
            .ok_or_else(|| SceneError::Descriptor {
                path: shown.clone(),
                message: format!("<{}> is missing attribute \"{name}\"", node.tag_name().name()),
            })
    };
    let number = |node: roxmltree::Node, name: &str| -> Result<f64, SceneError> {
        let raw = attr(node, name)?;
        raw.trim().parse::<f64>().map_err(|_| SceneError::Descriptor {
            path: shown.clone(),
            message: format!("attribute {name}=\"{raw}\" is not a number"),
        })
    };

    let mut materials = Vec::new();
    let mut by_name = HashMap::new();
    let mut shapes = Vec::new();
    for child in root.children().filter(|n| n.is_element()) {
        match child.tag_name().name() {
            "material" => {
                let name = attr(child, "name")?;
                let m = Material::new(
                    name.clone(),
                    number(child, "permittivity")?,
                    number(child, "conductivity")?,
                )?;
                if by_name.insert(name.clone(), materials.len()).is_some() {
                    return Err(SceneError::DuplicateMaterial(name));
                }
                materials.push(m);
            }
            "shape" => shapes.push((attr(child, "obj")?, attr(child, "material")?)),
            other => {
                return Err(SceneError::Descriptor {
                    path: shown,
                    message: format!("unexpected element <{other}>"),
                })
            }
        }
    }

    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut triangles = Vec::new();
    for (obj, material) in shapes {
        let material_index = *by_name.get(&material).ok_or_else(|| SceneError::UnknownMaterial {
            name: material.clone(),
            file: obj.clone(),
        })?;
        let obj_path = base.join(&obj);
        let obj_text = fs::read_to_string(&obj_path).map_err(|source| SceneError::Io {
            path: obj_path.display().to_string(),
            source,
        })?;
        triangles.extend(parse_obj(&obj_text, &obj_path.display().to_string(), material_index)?);
    }
    Scene::new(triangles, materials)
}

/// Parse the `v`/`f` subset of an OBJ file into triangles. Faces are
/// numbered from 1 in diagnostics, in file order.
pub fn parse_obj(text: &str, file: &str, material_index: usize) -> Result<Vec<Triangle>, SceneError> {
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut triangles = Vec::new();
    let mut face_number = 0usize;
    let err = |line: usize, message: String| SceneError::Obj {
        file: file.to_owned(),
        line,
        message,
    };

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let coords: Vec<f64> = tokens
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| err(line_no, format!("bad vertex record \"{line}\"")))?;
                if coords.len() != 3 {
                    return Err(err(line_no, format!("vertex needs 3 coordinates: \"{line}\"")));
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                face_number += 1;
                let mut idx = Vec::new();
                for tok in tokens {
                    let first = tok.split('/').next().unwrap_or("");
                    let i: i64 = first
                        .parse()
                        .map_err(|_| err(line_no, format!("bad face index \"{tok}\"")))?;
                    let resolved = if i > 0 {
                        i - 1
                    } else if i < 0 {
                        vertices.len() as i64 + i
                    } else {
                        -1
                    };
                    if resolved < 0 || resolved as usize >= vertices.len() {
                        return Err(err(line_no, format!("face index {i} out of range")));
                    }
                    idx.push(resolved as usize);
                }
                if idx.len() < 3 {
                    return Err(err(line_no, "face needs at least 3 vertices".into()));
                }
                for k in 1..idx.len() - 1 {
                    let t = Triangle::new(vertices[idx[0]], vertices[idx[k]], vertices[idx[k + 1]], material_index);
                    if !(t.area() > MIN_TRIANGLE_AREA) {
                        return Err(SceneError::DegenerateFace {
                            file: file.to_owned(),
                            face: face_number,
                        });
                    }
                    triangles.push(t);
                }
            }
            _ => {}
        }
    }
    Ok(triangles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn fan_triangulates_quads_and_skips_other_records() {
        let obj = "# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nvt 0 0\nf 1/1/1 2/2/1 3//1 4\n";
        let tris = parse_obj(obj, "quad.obj", 0).unwrap();
        assert_eq!(tris.len(), 2);
        assert!((tris[0].area() + tris[1].area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn negative_indices_are_relative() {
        let tris = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n", "rel.obj", 0).unwrap();
        assert_eq!(tris.len(), 1);
    }

    #[test]
    fn zero_area_face_names_file_and_face() {
        let obj = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 2 0 0\nf 1 2 3\nf 1 2 4\n";
        let e = parse_obj(obj, "walls.obj", 0).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("walls.obj") && msg.contains("face 2"), "{msg}");
    }

    #[test]
    fn out_of_range_index_rejected() {
        assert!(parse_obj("v 0 0 0\nf 1 2 3\n", "x.obj", 0).is_err());
    }

    #[test]
    fn empty_descriptor_gives_empty_scene() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.xml");
        fs::write(&p, "<scene></scene>").unwrap();
        let s = load_scene(&p).unwrap();
        assert_eq!(s.triangles().len(), 0);
        assert!(s.bounds().is_empty());
        assert!(s.bounds().min.x > s.bounds().max.x);
    }

    #[test]
    fn unknown_material_named_in_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut f = fs::File::create(dir.path().join("pane.obj")).unwrap();
        writeln!(f, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3").unwrap();
        let p = dir.path().join("scene.xml");
        fs::write(
            &p,
            r#"<scene><material name="wood" permittivity="2" conductivity="0.01"/>
               <shape obj="pane.obj" material="glass"/></scene>"#,
        )
        .unwrap();
        let e = load_scene(&p).unwrap_err();
        assert!(matches!(&e, SceneError::UnknownMaterial { name, .. } if name == "glass"));
        assert!(e.to_string().contains("glass"));
    }

    #[test]
    fn missing_files_report_path() {
        let e = load_scene("/nonexistent/scene.xml").unwrap_err();
        assert!(e.to_string().contains("/nonexistent/scene.xml"));

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("scene.xml");
        fs::write(
            &p,
            r#"<scene><material name="wood" permittivity="2" conductivity="0"/>
               <shape obj="gone.obj" material="wood"/></scene>"#,
        )
        .unwrap();
        assert!(load_scene(&p).unwrap_err().to_string().contains("gone.obj"));
    }
}
