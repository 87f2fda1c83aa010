//! On-disk instance format: a JSON manifest with SHA-256 checksums next to
//! three CSV files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Instance, InstanceMeta, REWARD_DECIMALS};
use crate::error::{Result, SimError};
use crate::fo::{FoState, Inventory, Order};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const ORDERS_FILE: &str = "orders.csv";
pub const INVENTORY_FILE: &str = "inventory.csv";
pub const CAPACITY_FILE: &str = "capacity.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(rename = "J")]
    pub nodes: usize,
    #[serde(rename = "I")]
    pub products: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub beta: f64,
    pub coverage: f64,
    pub seed: u64,
    /// File name to lowercase hex SHA-256.
    pub checksums: BTreeMap<String, String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn to_csv<F>(header: &[String], mut rows: F) -> Result<Vec<u8>>
where
    F: FnMut(&mut csv::Writer<&mut Vec<u8>>) -> Result<()>,
{
    let mut buf = Vec::new();
    {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut buf);
        w.write_record(header)?;
        rows(&mut w)?;
        w.flush()?;
    }
    Ok(buf)
}

fn orders_csv(instance: &Instance) -> Result<Vec<u8>> {
    let mut header: Vec<String> = ["t", "product", "origin_node"].map(String::from).to_vec();
    header.extend((0..instance.nodes()).map(|j| format!("r{j}")));
    let decimals = REWARD_DECIMALS as usize;
    to_csv(&header, |w| {
        let mut row = Vec::with_capacity(header.len());
        for o in &instance.orders {
            row.clear();
            row.push(o.t.to_string());
            row.push(o.product.to_string());
            row.push(o.origin.to_string());
            row.extend(o.rewards.iter().map(|r| format!("{r:.decimals$}")));
            w.write_record(&row)?;
        }
        Ok(())
    })
}

fn inventory_csv(instance: &Instance) -> Result<Vec<u8>> {
    let header = ["product", "node", "units"].map(String::from);
    to_csv(&header, |w| {
        for (i, j, u) in instance.initial.inventory.entries() {
            w.write_record([i.to_string(), j.to_string(), u.to_string()])?;
        }
        Ok(())
    })
}

fn capacity_csv(instance: &Instance) -> Result<Vec<u8>> {
    let header = ["node", "units"].map(String::from);
    to_csv(&header, |w| {
        for (j, c) in instance.initial.capacity.iter().enumerate() {
            w.write_record([j.to_string(), c.to_string()])?;
        }
        Ok(())
    })
}

/// Writes the four instance files into `dir` (created if missing).
pub fn save_instance(instance: &Instance, dir: &Path) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    let mut checksums = BTreeMap::new();
    for (name, bytes) in [
        (ORDERS_FILE, orders_csv(instance)?),
        (INVENTORY_FILE, inventory_csv(instance)?),
        (CAPACITY_FILE, capacity_csv(instance)?),
    ] {
        fs::write(dir.join(name), &bytes)?;
        checksums.insert(name.to_string(), sha256_hex(&bytes));
    }
    let manifest = Manifest {
        nodes: instance.nodes(),
        products: instance.products(),
        horizon: instance.horizon(),
        beta: instance.meta.beta,
        coverage: instance.meta.coverage,
        seed: instance.meta.seed,
        checksums,
    };
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    fs::write(dir.join(MANIFEST_FILE), json)?;
    Ok(manifest)
}

fn read_checked(dir: &Path, name: &str, manifest: &Manifest) -> Result<Vec<u8>> {
    let bytes = fs::read(dir.join(name))?;
    match manifest.checksums.get(name) {
        Some(expected) if expected.eq_ignore_ascii_case(&sha256_hex(&bytes)) => Ok(bytes),
        _ => Err(SimError::Checksum { file: name.to_string() }),
    }
}

fn parse<T: std::str::FromStr>(field: Option<&str>, what: &str, line: u64) -> Result<T> {
    field
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| SimError::InvalidData(format!("line {line}: bad or missing {what}")))
}

fn records(bytes: &[u8]) -> impl Iterator<Item = Result<(u64, csv::StringRecord)>> + '_ {
    csv::Reader::from_reader(bytes).into_records().map(|r| {
        let r = r?;
        let line = r.position().map_or(0, |p| p.line());
        Ok((line, r))
    })
}

/// Reads an instance written by [`save_instance`], verifying checksums and
/// dimensions.
pub fn load_instance(dir: &Path) -> Result<Instance> {
    let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?;
    let (nodes, products, horizon) = (manifest.nodes, manifest.products, manifest.horizon);

    let mut capacity = vec![None; nodes];
    for rec in records(&read_checked(dir, CAPACITY_FILE, &manifest)?) {
        let (line, r) = rec?;
        let j: usize = parse(r.get(0), "node", line)?;
        let units: u32 = parse(r.get(1), "units", line)?;
        match capacity.get_mut(j) {
            Some(slot @ None) => *slot = Some(units),
            _ => return Err(SimError::InvalidData(format!("{CAPACITY_FILE} line {line}: node {j} invalid or repeated"))),
        }
    }
    let capacity = capacity
        .into_iter()
        .enumerate()
        .map(|(j, c)| c.ok_or_else(|| SimError::InvalidData(format!("{CAPACITY_FILE}: node {j} missing"))))
        .collect::<Result<Vec<u32>>>()?;

    let mut entries = Vec::new();
    for rec in records(&read_checked(dir, INVENTORY_FILE, &manifest)?) {
        let (line, r) = rec?;
        entries.push((
            parse(r.get(0), "product", line)?,
            parse(r.get(1), "node", line)?,
            parse(r.get(2), "units", line)?,
        ));
    }
    let inventory = Inventory::from_entries(products, nodes, entries)?;

    let mut orders = Vec::with_capacity(horizon);
    for rec in records(&read_checked(dir, ORDERS_FILE, &manifest)?) {
        let (line, r) = rec?;
        if r.len() != 3 + nodes {
            return Err(SimError::InvalidData(format!(
                "{ORDERS_FILE} line {line}: {} fields, expected {}",
                r.len(),
                3 + nodes
            )));
        }
        let t: usize = parse(r.get(0), "t", line)?;
        if t != orders.len() {
            return Err(SimError::InvalidData(format!("{ORDERS_FILE} line {line}: t = {t} out of sequence")));
        }
        let product: u32 = parse(r.get(1), "product", line)?;
        let origin: u32 = parse(r.get(2), "origin_node", line)?;
        if product as usize >= products || origin as usize >= nodes {
            return Err(SimError::InvalidData(format!("{ORDERS_FILE} line {line}: index out of range")));
        }
        let rewards = (3..3 + nodes)
            .map(|k| parse::<f64>(r.get(k), "reward", line))
            .collect::<Result<Box<[f64]>>>()?;
        orders.push(Order { t, product, origin, rewards });
    }
    if orders.len() != horizon {
        return Err(SimError::LengthMismatch {
            expected: horizon,
            actual: orders.len(),
        });
    }

    let instance = Instance {
        initial: FoState { inventory, capacity },
        orders,
        meta: InstanceMeta {
            beta: manifest.beta,
            coverage: manifest.coverage,
            seed: manifest.seed,
        },
    };
    instance.env().validate_orders(&instance.orders)?;
    Ok(instance)
}
