//! Parsers for camera and light flags.

use anyhow::Result;
use btfstream::render::LightSource;

use crate::Usage;

/// `x,y,z`.
pub fn parse_vec3(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected x,y,z, got '{s}'"));
    }
    let mut out = [0.0f64; 3];
    for (o, p) in out.iter_mut().zip(&parts) {
        *o = p.parse().map_err(|_| format!("'{p}' is not a number"))?;
        if !o.is_finite() {
            return Err(format!("'{p}' is not finite"));
        }
    }
    Ok(out)
}

/// `WxH`.
pub fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected WIDTHxHEIGHT, got '{s}'"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("'{v}' is not a pixel count"));
    Ok((parse(w)?, parse(h)?))
}

/// `dir:x,y,z`, `point:x,y,z` or `spot:px,py,pz:ax,ay,az:cone`, each with an
/// optional trailing `:r,g,b` intensity.
pub fn parse_light(s: &str) -> Result<LightSource> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = |why: String| Usage(format!("light '{s}': {why}"));
    let (kind, rest) = parts.split_first().ok_or_else(|| bad("empty".into()))?;
    let fixed = match *kind {
        "dir" | "directional" | "point" => 1,
        "spot" => 3,
        other => return Err(bad(format!("unknown kind '{other}' (dir, point or spot)")).into()),
    };
    if rest.len() != fixed && rest.len() != fixed + 1 {
        return Err(bad(format!("expected {fixed} or {} fields after the kind", fixed + 1)).into());
    }
    let vec = |i: usize| parse_vec3(rest[i]).map_err(&bad);
    let intensity = if rest.len() > fixed { vec(fixed)? } else { [1.0; 3] };
    let light = match *kind {
        "point" => LightSource::point(vec(0)?, intensity),
        "spot" => {
            let cone: f64 = rest[2].parse().map_err(|_| bad(format!("cone angle '{}' is not a number", rest[2])))?;
            LightSource::spot(vec(0)?, vec(1)?, cone, intensity)
        }
        _ => LightSource::directional(vec(0)?, intensity),
    };
    light.map_err(|e| bad(e.to_string()).into())
}
