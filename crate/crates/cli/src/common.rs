//! Settings shared by several commands and the worker pool.

use std::fmt;
use std::str::FromStr;
use std::thread;

use pve_core::env::{FourRooms, FourRoomsConfig, SlipMode};
use pve_core::Rank;

use crate::config::{Config, Settings};
use crate::error::{LabError, LabResult};

pub const ENV_KEYS: [&str; 3] = ["slip", "slip_mode", "discount"];

/// Four Rooms parameters, read from the `[env]` section.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvSettings {
    pub slip: f64,
    pub slip_mode: SlipMode,
    pub discount: f64,
}

impl Default for EnvSettings {
    fn default() -> Self {
        let c = FourRoomsConfig::default();
        Self {
            slip: c.slip,
            slip_mode: c.slip_mode,
            discount: c.discount,
        }
    }
}

impl EnvSettings {
    pub fn from_config(config: &Config) -> LabResult<Self> {
        config.check_keys("env", &ENV_KEYS)?;
        let d = Self::default();
        let slip_mode = match config.get("env", "slip_mode") {
            None | Some("inclusive") => SlipMode::Inclusive,
            Some("exclusive") => SlipMode::Exclusive,
            Some(other) => {
                return Err(LabError::Config(format!(
                    "[env] slip_mode must be inclusive or exclusive, got {other:?}"
                )))
            }
        };
        Ok(Self {
            slip: config.value("env", "slip", d.slip)?,
            slip_mode,
            discount: config.value("env", "discount", d.discount)?,
        })
    }

    pub fn build(&self) -> LabResult<FourRooms> {
        Ok(FourRooms::new(FourRoomsConfig {
            slip: self.slip,
            discount: self.discount,
            slip_mode: self.slip_mode,
        })?)
    }

    pub fn record(&self, s: &mut Settings) {
        s.push("env.slip", self.slip);
        s.push(
            "env.slip_mode",
            match self.slip_mode {
                SlipMode::Inclusive => "inclusive",
                SlipMode::Exclusive => "exclusive",
            },
        );
        s.push("env.discount", self.discount);
    }
}

/// A model-space class: order-k VE for finite `k`, PVE for `Infinite`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Order {
    Finite(usize),
    Infinite,
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Order::Finite(k) => write!(f, "{k}"),
            Order::Infinite => write!(f, "inf"),
        }
    }
}

impl FromStr for Order {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inf" | "infinity" | "∞" => Ok(Order::Infinite),
            _ => match s.parse::<usize>() {
                Ok(k) if k >= 1 => Ok(Order::Finite(k)),
                _ => Err(format!("bad order {s:?}")),
            },
        }
    }
}

pub fn parse_rank(s: &str) -> LabResult<Rank> {
    if s == "full" {
        return Ok(Rank::Full);
    }
    s.parse::<usize>()
        .ok()
        .filter(|&r| r >= 1)
        .map(Rank::Low)
        .ok_or_else(|| LabError::Config(format!("bad rank {s:?}")))
}

/// `Rank::Low(n)` and `Rank::Full` describe the same model class for `n` states.
pub fn normalize_rank(rank: Rank, n_states: usize) -> Rank {
    match rank {
        Rank::Low(r) if r >= n_states => Rank::Full,
        other => other,
    }
}

/// Apply `f` to every item on up to `workers` threads, preserving order.
pub fn par_map<T, U, F>(items: &mut [T], workers: usize, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(&mut T) -> U + Sync,
{
    if items.is_empty() {
        return Vec::new();
    }
    let workers = workers.clamp(1, items.len());
    if workers == 1 {
        return items.iter_mut().map(&f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks_mut(chunk)
            .map(|c| {
                let f = &f;
                scope.spawn(move || c.iter_mut().map(f).collect::<Vec<_>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

/// Mean and standard error of the mean.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orders_parse_and_sort() {
        let mut ks: Vec<Order> = ["inf", "10", "1", "5"].iter().map(|s| s.parse().unwrap()).collect();
        ks.sort();
        let labels: Vec<String> = ks.iter().map(|k| k.to_string()).collect();
        assert_eq!(labels, ["1", "5", "10", "inf"]);
        assert!("0".parse::<Order>().is_err());
    }

    #[test]
    fn ranks() {
        assert_eq!(parse_rank("full").unwrap(), Rank::Full);
        assert_eq!(parse_rank("10").unwrap(), Rank::Low(10));
        assert!(parse_rank("0").is_err());
        assert_eq!(normalize_rank(Rank::Low(104), 104), Rank::Full);
    }

    #[test]
    fn par_map_keeps_order() {
        let mut items: Vec<usize> = (0..17).collect();
        let out = par_map(&mut items, 4, |x| *x * 2);
        assert_eq!(out, (0..17).map(|x| x * 2).collect::<Vec<_>>());
    }

    #[test]
    fn env_section() {
        let c = Config::parse("[env]\nslip = 0.1\nslip_mode = exclusive").unwrap();
        let e = EnvSettings::from_config(&c).unwrap();
        assert_eq!(e.slip, 0.1);
        assert_eq!(e.slip_mode, SlipMode::Exclusive);
        assert!(EnvSettings::from_config(&Config::parse("[env]\nwind = 1").unwrap()).is_err());
    }
}
