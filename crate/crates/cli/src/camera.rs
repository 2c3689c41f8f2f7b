//! Camera specifications shared by the CLI and the render service.

use base64::engine::general_purpose::{STANDARD, URL_SAFE, URL_SAFE_NO_PAD};
use base64::Engine;
use dylin::ray::Camera;
use dylin::scene::{orbit_camera, OracleScene};

/// Resolves `front`, `orbit:<degrees>`, raw camera JSON, or base64-encoded
/// camera JSON. Width and height always come from the arguments.
pub fn parse_camera(spec: &str, scene: &OracleScene, width: usize, height: usize) -> Result<Camera, String> {
    let spec = spec.trim();
    if spec.is_empty() || spec == "front" {
        return Ok(orbit_camera(scene, 0.0, width, height));
    }
    if let Some(deg) = spec.strip_prefix("orbit:") {
        let deg: f64 = deg.parse().map_err(|_| format!("bad orbit angle {deg:?}"))?;
        if !deg.is_finite() {
            return Err("orbit angle must be finite".into());
        }
        return Ok(orbit_camera(scene, deg, width, height));
    }
    let json = if spec.starts_with('{') {
        spec.as_bytes().to_vec()
    } else {
        [&STANDARD, &URL_SAFE, &URL_SAFE_NO_PAD]
            .iter()
            .find_map(|e| e.decode(spec).ok())
            .ok_or_else(|| format!("camera {spec:?} is neither a preset nor base64 JSON"))?
    };
    let cam: Camera = serde_json::from_slice(&json).map_err(|e| format!("bad camera JSON: {e}"))?;
    let cam = cam.with_size(width, height);
    cam.validate().map_err(|e| e.to_string())?;
    Ok(cam)
}

/// Parses `WxH`.
pub fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("size {s:?} is not WIDTHxHEIGHT"))?;
    let w: usize = w.parse().map_err(|_| format!("bad width in {s:?}"))?;
    let h: usize = h.parse().map_err(|_| format!("bad height in {s:?}"))?;
    if w == 0 || h == 0 {
        return Err("size must be positive".into());
    }
    Ok((w, h))
}

/// Parses a comma-separated attribute vector; empty means no attributes.
pub fn parse_alpha(s: &str) -> Result<Vec<f64>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| format!("bad attribute value {v:?}")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use dylin::scene::scene_by_name;

    #[test]
    fn presets_and_json_agree() {
        let scene = scene_by_name("split").unwrap();
        let front = parse_camera("front", &scene, 8, 6).unwrap();
        assert_eq!(front, parse_camera("orbit:0", &scene, 8, 6).unwrap());
        let json = serde_json::to_string(&front).unwrap();
        assert_eq!(parse_camera(&json, &scene, 8, 6).unwrap(), front);
        let b64 = STANDARD.encode(&json);
        assert_eq!(parse_camera(&b64, &scene, 8, 6).unwrap(), front);
        let b64 = URL_SAFE_NO_PAD.encode(&json);
        assert_eq!(parse_camera(&b64, &scene, 8, 6).unwrap(), front);
        assert!(parse_camera("orbit:x", &scene, 8, 6).is_err());
        assert!(parse_camera("@@", &scene, 8, 6).is_err());
    }

    #[test]
    fn sizes_and_alphas() {
        assert_eq!(parse_size("64x48").unwrap(), (64, 48));
        assert!(parse_size("64").is_err());
        assert!(parse_size("0x4").is_err());
        assert_eq!(parse_alpha("0.5,-1").unwrap(), vec![0.5, -1.0]);
        assert_eq!(parse_alpha("").unwrap(), Vec::<f64>::new());
        assert!(parse_alpha("a").is_err());
    }
}
