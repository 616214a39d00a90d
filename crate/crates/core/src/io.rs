//! Versioned JSON documents. Every document is an object carrying
//! `"schema": "qval/1"` and a `"kind"` naming its content.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dirichlet::{build_graded_disk_mesh, Mesh, QFunction, SCHEMA};
use crate::error::{Error, Result};
use crate::selection::SampledQPath;

/// The mesh a problem is posed on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeshSpec {
    Disk {
        radius: f64,
        resolution: usize,
        #[serde(default = "unit")]
        grading: f64,
    },
}

fn unit() -> f64 {
    1.0
}

impl MeshSpec {
    pub fn build(&self) -> Result<Mesh> {
        match *self {
            MeshSpec::Disk { radius, resolution, grading } => build_graded_disk_mesh(radius, resolution, grading),
        }
    }
}

/// A Dirichlet problem: a mesh and a boundary trace sampled at its boundary
/// vertices.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Problem {
    pub mesh: MeshSpec,
    pub boundary: SampledQPath,
}

/// The pieces of a decomposed minimizer.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Pieces {
    pub pieces: Vec<QFunction>,
}

#[derive(Deserialize)]
struct Header {
    schema: Option<String>,
    kind: Option<String>,
}

#[derive(Serialize)]
struct Tagged<'a, T> {
    schema: &'static str,
    kind: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

/// The `kind` of a document after checking its schema tag.
pub fn document_kind(text: &str) -> Result<String> {
    let h: Header = serde_json::from_str(text)?;
    match (h.schema.as_deref(), h.kind) {
        (Some(SCHEMA), Some(kind)) => Ok(kind),
        (Some(s), _) if s != SCHEMA => Err(Error::InvalidInput(format!("unsupported schema {s:?}, expected {SCHEMA:?}"))),
        (None, _) => Err(Error::InvalidInput(format!("missing \"schema\": \"{SCHEMA}\""))),
        _ => Err(Error::InvalidInput("missing \"kind\"".into())),
    }
}

/// Serializes `body` with the schema tag and `kind` added in front. Bodies
/// that already carry both (such as [`QFunction`]) are written unchanged.
pub fn to_document<T: Serialize>(kind: &str, body: &T) -> Result<String> {
    let plain = serde_json::to_string(body)?;
    if document_kind(&plain).ok().as_deref() == Some(kind) {
        return Ok(plain);
    }
    Ok(serde_json::to_string(&Tagged { schema: SCHEMA, kind, body })?)
}

/// Parses a document of the given kind. Parse errors report line and column.
pub fn from_document<T: DeserializeOwned>(kind: &str, text: &str) -> Result<T> {
    let found = document_kind(text)?;
    if found != kind {
        return Err(Error::InvalidInput(format!("expected a {kind:?} document, found {found:?}")));
    }
    Ok(serde_json::from_str(text)?)
}

pub fn read_path(text: &str) -> Result<SampledQPath> {
    let p: SampledQPath = from_document("path", text)?;
    p.validate()?;
    Ok(p)
}

pub fn read_problem(text: &str) -> Result<Problem> {
    let p: Problem = from_document("problem", text)?;
    p.boundary.validate()?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::QPoint;

    fn problem() -> Problem {
        let mesh = MeshSpec::Disk { radius: 1.0, resolution: 3, grading: 1.0 };
        let boundary = SampledQPath::circle_from_fn(18, |t| QPoint::from_scalars(&[t.cos(), -t.cos()]).unwrap()).unwrap();
        Problem { mesh, boundary }
    }

    #[test]
    fn problem_round_trip() {
        let p = problem();
        let s = to_document("problem", &p).unwrap();
        assert!(s.starts_with(r#"{"schema":"qval/1","kind":"problem","mesh":{"kind":"disk""#));
        let back = read_problem(&s).unwrap();
        assert_eq!(back.mesh, p.mesh);
        assert_eq!(to_document("problem", &back).unwrap(), s);
        assert_eq!(back.mesh.build().unwrap().boundary_loop().len(), 18);
    }

    #[test]
    fn grading_defaults_to_one() {
        let s = r#"{"schema":"qval/1","kind":"problem","mesh":{"kind":"disk","radius":2.0,"resolution":4},
            "boundary":{"topology":"circle","params":[0.0,1.0,2.0],"values":[
            {"q":1,"n":1,"points":[[0.0]]},{"q":1,"n":1,"points":[[1.0]]},{"q":1,"n":1,"points":[[2.0]]}]}}"#;
        let p = read_problem(s).unwrap();
        assert_eq!(p.mesh, MeshSpec::Disk { radius: 2.0, resolution: 4, grading: 1.0 });
    }

    #[test]
    fn wrong_schema_or_kind_is_rejected() {
        let s = to_document("problem", &problem()).unwrap();
        assert!(read_path(&s).is_err());
        assert!(read_problem(&s.replace("qval/1", "qval/2")).is_err());
        let err = read_problem("{\"schema\":\"qval/1\",\n\"kind\":\"problem\",\n\"mesh\": 3}").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn qfunction_documents_are_not_wrapped_twice() {
        let mesh = std::sync::Arc::new(problem().mesh.build().unwrap());
        let f = QFunction::constant(mesh, &QPoint::from_scalars(&[1.0, 2.0]).unwrap());
        let s = to_document("qfunction", &f).unwrap();
        assert_eq!(s, serde_json::to_string(&f).unwrap());
        let back: QFunction = from_document("qfunction", &s).unwrap();
        assert_eq!(back.energy(), 0.0);
    }
}
