//! Vector geometry ingestion: GeoJSON parsing, the Overpass road fetch, and
//! the local equirectangular projection that puts everything on one metric
//! plane.
//!
//! GeoJSON coordinates are trusted as already planar-metric; only the
//! Overpass path projects from WGS84. The projection is a local tangent
//! approximation (adequate below city scale, unsuitable for polar or
//! continental extents).

use std::time::Duration;

use serde_json::{json, Value};

use crate::error::{Error, Result};

/// WGS84 equatorial radius in meters.
const EARTH_RADIUS_M: f64 = 6_378_137.0;

/// Approximation of the "main drivable roads"; overridable everywhere it is
/// consumed.
pub const DEFAULT_HIGHWAY_CLASSES: &[&str] = &[
    "motorway",
    "trunk",
    "primary",
    "secondary",
    "tertiary",
    "unclassified",
    "residential",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub vertices: Vec<Point2>,
}

impl Polyline {
    /// At least 2 vertices and at least one segment of positive length.
    pub fn new(vertices: Vec<Point2>) -> Result<Self> {
        if vertices.len() < 2 {
            return Err(Error::validation(format!(
                "polyline needs >= 2 vertices, got {}",
                vertices.len()
            )));
        }
        let has_length = vertices
            .windows(2)
            .any(|w| w[0].x != w[1].x || w[0].y != w[1].y);
        if !has_length {
            return Err(Error::validation("polyline has no segment of positive length"));
        }
        Ok(Polyline { vertices })
    }

    pub fn segments(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        self.vertices.windows(2).map(|w| (w[0], w[1]))
    }
}

/// Rings are implicitly closed; the last vertex need not repeat the first.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub outer: Vec<Point2>,
    pub holes: Vec<Vec<Point2>>,
}

impl Polygon {
    pub fn new(outer: Vec<Point2>, holes: Vec<Vec<Point2>>) -> Result<Self> {
        validate_ring(&outer)?;
        for hole in &holes {
            validate_ring(hole)?;
        }
        Ok(Polygon { outer, holes })
    }

    pub fn rings(&self) -> impl Iterator<Item = &[Point2]> {
        std::iter::once(self.outer.as_slice()).chain(self.holes.iter().map(|h| h.as_slice()))
    }
}

fn validate_ring(ring: &[Point2]) -> Result<()> {
    let mut distinct: Vec<Point2> = Vec::new();
    for &p in ring {
        if !distinct.iter().any(|q| q.x == p.x && q.y == p.y) {
            distinct.push(p);
        }
    }
    if distinct.len() < 3 {
        return Err(Error::validation(format!(
            "ring needs >= 3 distinct vertices, got {}",
            distinct.len()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureSet {
    pub polylines: Vec<Polyline>,
    pub polygons: Vec<Polygon>,
}

/// WGS84 bounding box in decimal degrees.
#[derive(Debug, Clone, Copy)]
pub struct GeoBBox {
    pub south: f64,
    pub west: f64,
    pub north: f64,
    pub east: f64,
}

impl GeoBBox {
    pub fn new(south: f64, west: f64, north: f64, east: f64) -> Result<Self> {
        if !(-90.0 <= south && south < north && north <= 90.0) {
            return Err(Error::validation(format!(
                "invalid latitude range {south}..{north}"
            )));
        }
        if !(-180.0 <= west && west < east && east <= 180.0) {
            return Err(Error::validation(format!(
                "invalid longitude range {west}..{east}"
            )));
        }
        Ok(GeoBBox { south, west, north, east })
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.west + self.east) / 2.0, (self.south + self.north) / 2.0)
    }
}

/// Origin of the local equirectangular plane.
#[derive(Debug, Clone, Copy)]
pub struct LocalProjection {
    pub lon0: f64,
    pub lat0: f64,
}

impl LocalProjection {
    pub fn new(lon0: f64, lat0: f64) -> Result<Self> {
        if !(-180.0..=180.0).contains(&lon0) || lat0.abs() >= 90.0 {
            return Err(Error::validation(format!(
                "invalid projection origin ({lon0}, {lat0})"
            )));
        }
        Ok(LocalProjection { lon0, lat0 })
    }
}

/// Equirectangular projection into the local metric plane.
pub fn project_wgs84_local(lon: f64, lat: f64, proj: &LocalProjection) -> Point2 {
    let k = proj.lat0.to_radians().cos();
    Point2 {
        x: EARTH_RADIUS_M * k * (lon - proj.lon0).to_radians(),
        y: EARTH_RADIUS_M * (lat - proj.lat0).to_radians(),
    }
}

/// Exact algebraic inverse of [`project_wgs84_local`].
pub fn unproject_local_wgs84(p: Point2, proj: &LocalProjection) -> (f64, f64) {
    let k = proj.lat0.to_radians().cos();
    let lon = proj.lon0 + (p.x / (EARTH_RADIUS_M * k)).to_degrees();
    let lat = proj.lat0 + (p.y / EARTH_RADIUS_M).to_degrees();
    (lon, lat)
}

/// Result of [`parse_geojson`]: the consumed features plus the number of
/// geometries of unsupported kinds that were skipped.
#[derive(Debug, Clone)]
pub struct GeoJsonParse {
    pub features: FeatureSet,
    pub skipped: usize,
}

/// Parse a GeoJSON document into a [`FeatureSet`].
///
/// Coordinates are taken verbatim as planar (x, y); no reprojection.
/// LineString / MultiLineString / Polygon / MultiPolygon are consumed;
/// other geometry kinds are counted in `skipped`.
pub fn parse_geojson(text: &str) -> Result<GeoJsonParse> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
        offset: byte_offset(text, e.line(), e.column()),
        message: e.to_string(),
    })?;
    let mut out = GeoJsonParse { features: FeatureSet::default(), skipped: 0 };
    let mut feature_index = 0usize;
    collect_geojson(&value, &mut out, &mut feature_index)?;
    Ok(out)
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut offset = 0usize;
    for (i, l) in text.split('\n').enumerate() {
        if i + 1 == line {
            return offset + column.saturating_sub(1).min(l.len());
        }
        offset += l.len() + 1;
    }
    offset
}

fn collect_geojson(value: &Value, out: &mut GeoJsonParse, index: &mut usize) -> Result<()> {
    let kind = value
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::format("GeoJSON object lacks a \"type\" member"))?;
    match kind {
        "FeatureCollection" => {
            let features = value
                .get("features")
                .and_then(Value::as_array)
                .ok_or_else(|| Error::format("FeatureCollection lacks a \"features\" array"))?;
            for feature in features {
                collect_geojson(feature, out, index)?;
            }
            Ok(())
        }
        "Feature" => match value.get("geometry") {
            Some(Value::Null) | None => {
                out.skipped += 1;
                *index += 1;
                Ok(())
            }
            Some(geometry) => collect_geojson(geometry, out, index),
        },
        "LineString" => {
            let pts = read_positions(coords(value)?, *index)?;
            out.features.polylines.push(polyline_at(pts, *index)?);
            *index += 1;
            Ok(())
        }
        "MultiLineString" => {
            for part in coord_array(value)? {
                let pts = read_positions(part, *index)?;
                out.features.polylines.push(polyline_at(pts, *index)?);
            }
            *index += 1;
            Ok(())
        }
        "Polygon" => {
            out.features.polygons.push(polygon_from_rings(coord_array(value)?, *index)?);
            *index += 1;
            Ok(())
        }
        "MultiPolygon" => {
            for part in coord_array(value)? {
                let rings = part
                    .as_array()
                    .ok_or_else(|| Error::format("MultiPolygon part is not an array"))?;
                out.features.polygons.push(polygon_from_rings(rings, *index)?);
            }
            *index += 1;
            Ok(())
        }
        _ => {
            out.skipped += 1;
            *index += 1;
            Ok(())
        }
    }
}

fn coords(value: &Value) -> Result<&Value> {
    value
        .get("coordinates")
        .ok_or_else(|| Error::format("geometry lacks \"coordinates\""))
}

fn coord_array(value: &Value) -> Result<&Vec<Value>> {
    coords(value)?
        .as_array()
        .ok_or_else(|| Error::format("\"coordinates\" is not an array"))
}

fn read_positions(value: &Value, index: usize) -> Result<Vec<Point2>> {
    let array = value
        .as_array()
        .ok_or_else(|| Error::format(format!("feature {index}: position list is not an array")))?;
    array
        .iter()
        .map(|pos| {
            let pair = pos.as_array().filter(|a| a.len() >= 2).ok_or_else(|| {
                Error::format(format!("feature {index}: position is not an [x, y] array"))
            })?;
            let x = pair[0].as_f64();
            let y = pair[1].as_f64();
            match (x, y) {
                (Some(x), Some(y)) if x.is_finite() && y.is_finite() => Ok(Point2::new(x, y)),
                _ => Err(Error::validation(format!(
                    "feature {index}: non-finite or non-numeric coordinate"
                ))),
            }
        })
        .collect()
}

fn polyline_at(pts: Vec<Point2>, index: usize) -> Result<Polyline> {
    Polyline::new(pts).map_err(|e| Error::validation(format!("feature {index}: {e}")))
}

fn polygon_from_rings(rings: &[Value], index: usize) -> Result<Polygon> {
    if rings.is_empty() {
        return Err(Error::validation(format!("feature {index}: polygon has no rings")));
    }
    let mut parsed: Vec<Vec<Point2>> = Vec::with_capacity(rings.len());
    for ring in rings {
        let mut pts = read_positions(ring, index)?;
        // GeoJSON rings repeat the first vertex; our rings are implicitly closed.
        if pts.len() >= 2 {
            let (first, last) = (pts[0], *pts.last().unwrap());
            if first.x == last.x && first.y == last.y {
                pts.pop();
            }
        }
        parsed.push(pts);
    }
    let outer = parsed.remove(0);
    Polygon::new(outer, parsed).map_err(|e| Error::validation(format!("feature {index}: {e}")))
}

/// Serialize a [`FeatureSet`] as a GeoJSON FeatureCollection. Rings are
/// closed on output (first vertex repeated) per RFC 7946.
pub fn write_geojson(features: &FeatureSet) -> String {
    let mut out: Vec<Value> = Vec::new();
    for line in &features.polylines {
        let coords: Vec<Value> = line.vertices.iter().map(|p| json!([p.x, p.y])).collect();
        out.push(json!({
            "type": "Feature",
            "properties": {},
            "geometry": { "type": "LineString", "coordinates": coords }
        }));
    }
    for poly in &features.polygons {
        let rings: Vec<Value> = poly
            .rings()
            .map(|ring| {
                let mut coords: Vec<Value> =
                    ring.iter().map(|p| json!([p.x, p.y])).collect();
                coords.push(json!([ring[0].x, ring[0].y]));
                Value::Array(coords)
            })
            .collect();
        out.push(json!({
            "type": "Feature",
            "properties": {},
            "geometry": { "type": "Polygon", "coordinates": rings }
        }));
    }
    serde_json::to_string_pretty(&json!({
        "type": "FeatureCollection",
        "features": out
    }))
    .expect("FeatureCollection serialization cannot fail")
}

/// Render the Overpass QL query for drivable ways in a bounding box.
/// Byte-identical across runs for identical inputs.
pub fn build_overpass_query(bbox: &GeoBBox, classes: &[String]) -> Result<String> {
    if classes.is_empty() {
        return Err(Error::validation("highway class list must be non-empty"));
    }
    for class in classes {
        let ok = !class.is_empty()
            && class.bytes().all(|b| b.is_ascii_lowercase() || b == b'_');
        if !ok {
            return Err(Error::validation(format!("invalid highway class {class:?}")));
        }
    }
    Ok(format!(
        "[out:json][timeout:60];way[\"highway\"~\"^({})$\"]({:.7},{:.7},{:.7},{:.7});out geom;",
        classes.join("|"),
        bbox.south,
        bbox.west,
        bbox.north,
        bbox.east
    ))
}

/// POST the query to an Overpass endpoint and return the raw response body.
///
/// Blocking; callers own scheduling. Tests replay recorded fixtures through
/// [`parse_overpass_response`] or a local listener instead of the live API.
pub fn fetch_roads(endpoint: &str, bbox: &GeoBBox, classes: &[String]) -> Result<Vec<u8>> {
    let query = build_overpass_query(bbox, classes)?;
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(60))
        .build()
        .map_err(|e| Error::Network(e.to_string()))?;
    let response = client
        .post(endpoint)
        .form(&[("data", query.as_str())])
        .send()
        .map_err(|e| {
            if e.is_timeout() {
                Error::Timeout
            } else {
                Error::Network(e.to_string())
            }
        })?;
    let status = response.status().as_u16();
    if status != 200 {
        let retry_after = response
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.parse().ok());
        return Err(Error::HttpStatus { status, retry_after });
    }
    response
        .bytes()
        .map(|b| b.to_vec())
        .map_err(|e| Error::Network(e.to_string()))
}

/// Parse an Overpass `out geom` JSON response, projecting each way into the
/// local plane. Only `way` elements are consumed; element order is preserved.
pub fn parse_overpass_response(bytes: &[u8], proj: &LocalProjection) -> Result<FeatureSet> {
    let value: Value = serde_json::from_slice(bytes).map_err(|e| Error::Parse {
        offset: 0,
        message: e.to_string(),
    })?;
    let elements = match value.get("elements") {
        Some(v) => v
            .as_array()
            .ok_or_else(|| Error::format("\"elements\" is not an array"))?,
        None => return Ok(FeatureSet::default()),
    };
    let mut features = FeatureSet::default();
    for element in elements {
        if element.get("type").and_then(Value::as_str) != Some("way") {
            continue;
        }
        let id = element.get("id").and_then(Value::as_u64).unwrap_or(0);
        let geometry = element
            .get("geometry")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::format(format!("way {id} has no geometry array")))?;
        let mut vertices = Vec::with_capacity(geometry.len());
        for node in geometry {
            let lat = node.get("lat").and_then(Value::as_f64);
            let lon = node.get("lon").and_then(Value::as_f64);
            match (lon, lat) {
                (Some(lon), Some(lat)) => {
                    vertices.push(project_wgs84_local(lon, lat, proj));
                }
                _ => return Err(Error::format(format!("way {id}: geometry node lacks lat/lon"))),
            }
        }
        features.polylines.push(
            Polyline::new(vertices)
                .map_err(|e| Error::validation(format!("way {id}: {e}")))?,
        );
    }
    Ok(features)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn deg_classes(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn linestring_becomes_one_polyline() {
        let text = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","properties":{},"geometry":
             {"type":"LineString","coordinates":[[0,0],[1,1],[2,0]]}}]}"#;
        let parsed = parse_geojson(text).unwrap();
        assert_eq!(parsed.features.polylines.len(), 1);
        assert_eq!(parsed.features.polygons.len(), 0);
        assert_eq!(parsed.features.polylines[0].vertices.len(), 3);
        assert_eq!(parsed.skipped, 0);
    }

    #[test]
    fn multilinestring_expands_per_part() {
        let text = r#"{"type":"MultiLineString","coordinates":[[[0,0],[1,0]],[[0,1],[1,1]]]}"#;
        let parsed = parse_geojson(text).unwrap();
        assert_eq!(parsed.features.polylines.len(), 2);
    }

    #[test]
    fn polygon_first_ring_outer_rest_holes() {
        let text = r#"{"type":"Polygon","coordinates":[
            [[0,0],[4,0],[4,4],[0,4],[0,0]],
            [[1,1],[2,1],[2,2],[1,2],[1,1]]]}"#;
        let parsed = parse_geojson(text).unwrap();
        assert_eq!(parsed.features.polygons.len(), 1);
        assert_eq!(parsed.features.polygons[0].holes.len(), 1);
        // closing duplicate dropped
        assert_eq!(parsed.features.polygons[0].outer.len(), 4);
    }

    #[test]
    fn multipolygon_expands_per_part() {
        let text = r#"{"type":"MultiPolygon","coordinates":[
            [[[0,0],[1,0],[1,1],[0,0]]],
            [[[5,5],[6,5],[6,6],[5,5]]]]}"#;
        let parsed = parse_geojson(text).unwrap();
        assert_eq!(parsed.features.polygons.len(), 2);
    }

    #[test]
    fn unsupported_kinds_are_counted_not_dropped_silently() {
        let text = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","properties":{},"geometry":{"type":"Point","coordinates":[0,0]}},
            {"type":"Feature","properties":{},"geometry":{"type":"LineString","coordinates":[[0,0],[1,0]]}}]}"#;
        let parsed = parse_geojson(text).unwrap();
        assert_eq!(parsed.skipped, 1);
        assert_eq!(parsed.features.polylines.len(), 1);
    }

    #[test]
    fn malformed_json_reports_byte_offset() {
        let err = parse_geojson("{\"type\": \"FeatureCollection\",").unwrap_err();
        match err {
            Error::Parse { offset, .. } => assert!(offset > 0),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn one_vertex_linestring_names_feature_index() {
        let text = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","properties":{},"geometry":{"type":"LineString","coordinates":[[0,0],[1,0]]}},
            {"type":"Feature","properties":{},"geometry":{"type":"LineString","coordinates":[[9,9]]}}]}"#;
        let err = parse_geojson(text).unwrap_err();
        assert!(err.to_string().contains("feature 1"), "{err}");
    }

    #[test]
    fn geojson_round_trip() {
        let fs = FeatureSet {
            polylines: vec![Polyline::new(vec![Point2::new(0.0, 0.0), Point2::new(3.0, 4.0)]).unwrap()],
            polygons: vec![Polygon::new(
                vec![Point2::new(0.0, 0.0), Point2::new(2.0, 0.0), Point2::new(2.0, -2.0)],
                vec![],
            )
            .unwrap()],
        };
        let text = write_geojson(&fs);
        let parsed = parse_geojson(&text).unwrap();
        assert_eq!(parsed.features, fs);
    }

    #[test]
    fn projection_origin_maps_to_origin() {
        let proj = LocalProjection::new(10.0, 53.5).unwrap();
        let p = project_wgs84_local(10.0, 53.5, &proj);
        assert_eq!(p.x, 0.0);
        assert_eq!(p.y, 0.0);
    }

    #[test]
    fn one_degree_north_is_about_111km() {
        let proj = LocalProjection::new(10.0, 53.5).unwrap();
        let p = project_wgs84_local(10.0, 54.5, &proj);
        assert!((p.y - 111_319.490_8).abs() < 1e-3, "y = {}", p.y);
    }

    #[test]
    fn one_degree_east_scales_by_cos_lat0() {
        // 111319.4908 * cos(53.5 deg), evaluated independently in f64.
        let expected = 111_319.490_793_272_19_f64 * (53.5_f64.to_radians()).cos();
        let proj = LocalProjection::new(10.0, 53.5).unwrap();
        let p = project_wgs84_local(11.0, 53.5, &proj);
        assert!((p.x - expected).abs() < 1e-6, "x = {} expected {}", p.x, expected);
    }

    #[test]
    fn projection_round_trip() {
        let proj = LocalProjection::new(9.99, 53.55).unwrap();
        for (lon, lat) in [(9.9, 53.5), (10.1, 53.6), (9.99, 53.55), (10.0, 53.0)] {
            let p = project_wgs84_local(lon, lat, &proj);
            let (lon2, lat2) = unproject_local_wgs84(p, &proj);
            assert!((lon - lon2).abs() < 1e-9);
            assert!((lat - lat2).abs() < 1e-9);
        }
    }

    #[test]
    fn overpass_query_template() {
        let bbox = GeoBBox::new(53.5, 9.9, 53.6, 10.0).unwrap();
        let q = build_overpass_query(&bbox, &deg_classes(&["primary"])).unwrap();
        assert_eq!(
            q,
            "[out:json][timeout:60];way[\"highway\"~\"^(primary)$\"](53.5000000,9.9000000,53.6000000,10.0000000);out geom;"
        );
    }

    #[test]
    fn overpass_query_default_classes_alternation() {
        let bbox = GeoBBox::new(53.5, 9.9, 53.6, 10.0).unwrap();
        let classes: Vec<String> =
            DEFAULT_HIGHWAY_CLASSES.iter().map(|s| s.to_string()).collect();
        let q = build_overpass_query(&bbox, &classes).unwrap();
        assert!(q.contains("^(motorway|trunk|primary|secondary|tertiary|unclassified|residential)$"));
    }

    #[test]
    fn overpass_query_link_variants() {
        let bbox = GeoBBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let q = build_overpass_query(&bbox, &deg_classes(&["primary", "primary_link"])).unwrap();
        assert!(q.contains("^(primary|primary_link)$"));
    }

    #[test]
    fn overpass_query_rejects_invalid_class() {
        let bbox = GeoBBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
        assert!(build_overpass_query(&bbox, &deg_classes(&["Primary!"])).is_err());
        assert!(build_overpass_query(&bbox, &[]).is_err());
    }

    #[test]
    fn overpass_response_projects_ways() {
        let proj = LocalProjection::new(10.0, 53.5).unwrap();
        let body = r#"{"elements":[
            {"type":"way","id":1,"geometry":[{"lat":53.5,"lon":10.0},{"lat":54.5,"lon":10.0}]}]}"#;
        let fs = parse_overpass_response(body.as_bytes(), &proj).unwrap();
        assert_eq!(fs.polylines.len(), 1);
        let line = &fs.polylines[0];
        assert_eq!(line.vertices[0].x, 0.0);
        assert_eq!(line.vertices[0].y, 0.0);
        assert!((line.vertices[1].y - 111_319.490_8).abs() < 1e-3);
    }

    #[test]
    fn overpass_response_empty_elements() {
        let proj = LocalProjection::new(0.0, 0.0).unwrap();
        let fs = parse_overpass_response(br#"{"elements":[]}"#, &proj).unwrap();
        assert!(fs.polylines.is_empty());
    }

    #[test]
    fn overpass_response_skips_nodes() {
        let proj = LocalProjection::new(0.0, 0.0).unwrap();
        let body = r#"{"elements":[{"type":"node","id":7,"lat":1.0,"lon":1.0}]}"#;
        let fs = parse_overpass_response(body.as_bytes(), &proj).unwrap();
        assert!(fs.polylines.is_empty());
    }

    #[test]
    fn overpass_way_without_geometry_is_format_error() {
        let proj = LocalProjection::new(0.0, 0.0).unwrap();
        let body = r#"{"elements":[{"type":"way","id":42}]}"#;
        let err = parse_overpass_response(body.as_bytes(), &proj).unwrap_err();
        assert!(err.to_string().contains("42"), "{err}");
    }
}
