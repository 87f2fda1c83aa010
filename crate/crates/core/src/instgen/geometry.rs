use crate::error::{Result, SimError};

/// Mean Earth radius in kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0090;

struct Site {
    city: &'static str,
    state: &'static str,
    lat: f64,
    lon: f64,
    population: f64,
}

const fn site(city: &'static str, state: &'static str, lat: f64, lon: f64, population: f64) -> Site {
    Site { city, state, lat, lon, population }
}

// The thirty most populous states (2020 census), each placed at its largest city.
const SITES: [Site; 30] = [
    site("Los Angeles", "CA", 34.0522, -118.2437, 39_538_223.0),
    site("Houston", "TX", 29.7604, -95.3698, 29_145_505.0),
    site("Jacksonville", "FL", 30.3322, -81.6557, 21_538_187.0),
    site("New York", "NY", 40.7128, -74.0060, 20_201_249.0),
    site("Philadelphia", "PA", 39.9526, -75.1652, 13_002_700.0),
    site("Chicago", "IL", 41.8781, -87.6298, 12_812_508.0),
    site("Columbus", "OH", 39.9612, -82.9988, 11_799_448.0),
    site("Atlanta", "GA", 33.7490, -84.3880, 10_711_908.0),
    site("Charlotte", "NC", 35.2271, -80.8431, 10_439_388.0),
    site("Detroit", "MI", 42.3314, -83.0458, 10_077_331.0),
    site("Newark", "NJ", 40.7357, -74.1724, 9_288_994.0),
    site("Virginia Beach", "VA", 36.8529, -75.9780, 8_631_393.0),
    site("Seattle", "WA", 47.6062, -122.3321, 7_705_281.0),
    site("Phoenix", "AZ", 33.4484, -112.0740, 7_151_502.0),
    site("Boston", "MA", 42.3601, -71.0589, 7_029_917.0),
    site("Nashville", "TN", 36.1627, -86.7816, 6_910_840.0),
    site("Indianapolis", "IN", 39.7684, -86.1581, 6_785_528.0),
    site("Baltimore", "MD", 39.2904, -76.6122, 6_177_224.0),
    site("Kansas City", "MO", 39.0997, -94.5786, 6_154_913.0),
    site("Milwaukee", "WI", 43.0389, -87.9065, 5_893_718.0),
    site("Denver", "CO", 39.7392, -104.9903, 5_773_714.0),
    site("Minneapolis", "MN", 44.9778, -93.2650, 5_706_494.0),
    site("Charleston", "SC", 32.7765, -79.9311, 5_118_425.0),
    site("Huntsville", "AL", 34.7304, -86.5861, 5_024_279.0),
    site("New Orleans", "LA", 29.9511, -90.0715, 4_657_757.0),
    site("Louisville", "KY", 38.2527, -85.7585, 4_505_836.0),
    site("Portland", "OR", 45.5152, -122.6784, 4_237_256.0),
    site("Oklahoma City", "OK", 35.4676, -97.5164, 3_959_353.0),
    site("Bridgeport", "CT", 41.1865, -73.1952, 3_605_944.0),
    site("Salt Lake City", "UT", 40.7608, -111.8910, 3_271_616.0),
];

/// Number of sites in the built-in table.
pub const MAX_NODES: usize = SITES.len();

/// Great-circle distance in kilometres between two `(lat, lon)` points in degrees.
pub fn haversine_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let h = ((lat2 - lat1) / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * ((lon2 - lon1) / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Fulfillment nodes with population weights and pairwise distances.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGeometry {
    names: Vec<String>,
    populations: Vec<f64>,
    distances: Vec<f64>,
}

impl NetworkGeometry {
    /// The first `nodes` entries of the built-in table, most populous first.
    pub fn us_states(nodes: usize) -> Result<Self> {
        if nodes == 0 || nodes > MAX_NODES {
            return Err(SimError::InvalidConfig(format!("J must be in 1..={MAX_NODES}, got {nodes}")));
        }
        let sites = &SITES[..nodes];
        let mut distances = vec![0.0; nodes * nodes];
        for (a, sa) in sites.iter().enumerate() {
            for (b, sb) in sites.iter().enumerate().skip(a + 1) {
                let d = haversine_km((sa.lat, sa.lon), (sb.lat, sb.lon));
                distances[a * nodes + b] = d;
                distances[b * nodes + a] = d;
            }
        }
        Ok(Self {
            names: sites.iter().map(|s| format!("{}, {}", s.city, s.state)).collect(),
            populations: sites.iter().map(|s| s.population).collect(),
            distances,
        })
    }

    /// Arbitrary geometry from population weights and a row-major distance
    /// matrix.
    pub fn from_parts(populations: Vec<f64>, distances: Vec<f64>) -> Result<Self> {
        let n = populations.len();
        if n == 0 {
            return Err(SimError::InvalidConfig("geometry needs at least one node".into()));
        }
        if distances.len() != n * n {
            return Err(SimError::InvalidConfig(format!("distance matrix must be {n}x{n}")));
        }
        if populations.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(SimError::InvalidConfig("populations must be positive".into()));
        }
        for a in 0..n {
            if distances[a * n + a] != 0.0 {
                return Err(SimError::InvalidConfig(format!("distance from node {a} to itself is not zero")));
            }
            for b in 0..n {
                let d = distances[a * n + b];
                if !(d.is_finite() && d >= 0.0) || d != distances[b * n + a] {
                    return Err(SimError::InvalidConfig(format!(
                        "distance ({a}, {b}) must be finite, non-negative and symmetric"
                    )));
                }
            }
        }
        Ok(Self {
            names: (0..n).map(|j| format!("node {j}")).collect(),
            populations,
            distances,
        })
    }

    pub fn nodes(&self) -> usize {
        self.populations.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn populations(&self) -> &[f64] {
        &self.populations
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        self.distances[a * self.nodes() + b]
    }

    /// Distances from `origin` to every node.
    pub fn distances_from(&self, origin: usize) -> &[f64] {
        let n = self.nodes();
        &self.distances[origin * n..(origin + 1) * n]
    }
}

/// `(max d - d_j) / max d`. All-zero distances give all ones.
pub fn rewards_from_distances(distances: &[f64]) -> Vec<f64> {
    let max = distances.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return vec![1.0; distances.len()];
    }
    distances.iter().map(|d| (max - d) / max).collect()
}

/// Reward vector for an order originating at node `origin`.
pub fn reward_vector(origin: usize, geometry: &NetworkGeometry) -> Result<Vec<f64>> {
    if origin >= geometry.nodes() {
        return Err(SimError::InvalidConfig(format!(
            "origin {origin} outside a {}-node geometry",
            geometry.nodes()
        )));
    }
    Ok(rewards_from_distances(geometry.distances_from(origin)))
}
