//! Versioned plain-text checkpoints.
//!
//! Floats are written as the hex of their IEEE-754 bit pattern, so a load
//! reproduces every parameter and moment bit for bit. Layout:
//!
//! ```text
//! uavlc-checkpoint 1
//! hyper <line count>
//! <toml-encoded SAC hyperparameters>
//! net <name> <comma-separated layer sizes>
//! <parameters>
//! adam <name> <step count> <lr> <beta1> <beta2> <eps>
//! <first moments>
//! <second moments>
//! ...
//! end
//! ```
//!
//! Meta checkpoints append a `meta` block (iteration counter, meta
//! hyperparameters and the task manifest) before `end`.

use std::fmt::Write as _;
use std::path::Path;

use uavlc_core::config::{MetaHyper, SacHyper};
use uavlc_core::env::Task;
use uavlc_core::geometry::Vec3;

use crate::adam::{Adam, AdamConfig};
use crate::error::{Error, Result};
use crate::mlp::Mlp;
use crate::sac::{SacAgent, SacNets};

const MAGIC: &str = "uavlc-checkpoint 1";

fn hex_f64(x: f64) -> String {
    format!("{:016x}", x.to_bits())
}

fn hex_words(values: &[f64]) -> String {
    let mut s = String::with_capacity(values.len() * 17);
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{:016x}", v.to_bits());
    }
    s
}

fn write_toml<T: serde::Serialize>(out: &mut String, tag: &str, value: &T) {
    let text = toml::to_string(value).expect("hyperparameters serialize to TOML");
    let lines: Vec<&str> = text.lines().collect();
    let _ = writeln!(out, "{tag} {}", lines.len());
    for l in lines {
        let _ = writeln!(out, "{l}");
    }
}

fn write_net(out: &mut String, name: &str, net: &Mlp) {
    let sizes: Vec<String> = net.sizes().iter().map(|s| s.to_string()).collect();
    let _ = writeln!(out, "net {name} {}", sizes.join(","));
    let _ = writeln!(out, "{}", hex_words(net.params()));
}

fn write_adam(out: &mut String, name: &str, opt: &Adam) {
    let c = opt.config;
    let _ = writeln!(
        out,
        "adam {name} {} {} {} {} {}",
        opt.t,
        hex_f64(c.lr),
        hex_f64(c.beta1),
        hex_f64(c.beta2),
        hex_f64(c.eps)
    );
    let _ = writeln!(out, "{}", hex_words(&opt.m));
    let _ = writeln!(out, "{}", hex_words(&opt.v));
}

fn write_agent_body(out: &mut String, agent: &SacAgent) {
    write_toml(out, "hyper", &agent.hyper);
    let n = &agent.nets;
    for (name, net) in [
        ("actor", &n.actor),
        ("critic1", &n.critic1),
        ("critic2", &n.critic2),
        ("target_actor", &n.target_actor),
        ("target1", &n.target1),
        ("target2", &n.target2),
    ] {
        write_net(out, name, net);
    }
    for (name, opt) in [
        ("actor", &agent.opt_actor),
        ("critic1", &agent.opt_critic1),
        ("critic2", &agent.opt_critic2),
    ] {
        write_adam(out, name, opt);
    }
}

/// Serializes an agent's networks, optimizer state and hyperparameters.
pub fn agent_to_string(agent: &SacAgent) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    write_agent_body(&mut out, agent);
    let _ = writeln!(out, "end");
    out
}

/// A meta-learner snapshot: the global agent plus the task manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaCheckpoint {
    pub global: SacAgent,
    pub hyper: MetaHyper,
    pub iteration: usize,
    pub tasks: Vec<Task>,
}

fn write_vec3(v: Vec3) -> String {
    format!("{} {} {}", hex_f64(v.x), hex_f64(v.y), hex_f64(v.z))
}

pub fn meta_to_string(meta: &MetaCheckpoint) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    write_agent_body(&mut out, &meta.global);
    let _ = writeln!(out, "meta {} {}", meta.iteration, meta.tasks.len());
    write_toml(&mut out, "metahyper", &meta.hyper);
    for t in &meta.tasks {
        let users: Vec<String> = t.users.iter().map(|&u| write_vec3(u)).collect();
        let _ = writeln!(out, "task {} {} {} {}", t.seed, write_vec3(t.initial), t.users.len(), users.join(" "));
    }
    let _ = writeln!(out, "end");
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            inner: text.lines().enumerate(),
            line: 0,
        }
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Checkpoint {
            line: self.line,
            message: message.into(),
        }
    }

    fn next_line(&mut self) -> Result<&'a str> {
        match self.inner.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l)
            }
            None => Err(self.err("unexpected end of checkpoint")),
        }
    }

    /// Next line split into whitespace tokens, checking the leading tag.
    fn tagged(&mut self, tag: &str) -> Result<Vec<&'a str>> {
        let l = self.next_line()?;
        let tokens: Vec<&str> = l.split_whitespace().collect();
        if tokens.first() != Some(&tag) {
            return Err(self.err(format!("expected `{tag}`, found `{l}`")));
        }
        Ok(tokens)
    }

    fn parse_f64(&self, tok: &str) -> Result<f64> {
        u64::from_str_radix(tok, 16)
            .map(f64::from_bits)
            .map_err(|_| self.err(format!("bad float word `{tok}`")))
    }

    fn parse_usize(&self, tok: &str) -> Result<usize> {
        tok.parse().map_err(|_| self.err(format!("bad integer `{tok}`")))
    }

    fn words(&mut self, expected: usize) -> Result<Vec<f64>> {
        let l = self.next_line()?;
        let v = l
            .split_whitespace()
            .map(|t| self.parse_f64(t))
            .collect::<Result<Vec<_>>>()?;
        if v.len() != expected {
            return Err(self.err(format!("expected {expected} values, found {}", v.len())));
        }
        Ok(v)
    }

    fn toml_block<T: serde::de::DeserializeOwned>(&mut self, tag: &str) -> Result<T> {
        let head = self.tagged(tag)?;
        let n = self.parse_usize(head.get(1).ok_or_else(|| self.err("missing line count"))?)?;
        let mut text = String::new();
        for _ in 0..n {
            text.push_str(self.next_line()?);
            text.push('\n');
        }
        toml::from_str(&text).map_err(|e| self.err(format!("{tag}: {e}")))
    }

    fn net(&mut self, name: &str) -> Result<Mlp> {
        let head = self.tagged("net")?;
        if head.get(1) != Some(&name) || head.len() != 3 {
            return Err(self.err(format!("expected network `{name}`")));
        }
        let sizes = head[2]
            .split(',')
            .map(|t| self.parse_usize(t))
            .collect::<Result<Vec<_>>>()?;
        let count: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        let params = self.words(count)?;
        Mlp::from_params(&sizes, params).map_err(|e| self.err(e.to_string()))
    }

    fn adam(&mut self, name: &str, n_params: usize) -> Result<Adam> {
        let head = self.tagged("adam")?;
        if head.get(1) != Some(&name) || head.len() != 7 {
            return Err(self.err(format!("expected optimizer `{name}`")));
        }
        let t = head[2].parse().map_err(|_| self.err("bad step count"))?;
        let config = AdamConfig {
            lr: self.parse_f64(head[3])?,
            beta1: self.parse_f64(head[4])?,
            beta2: self.parse_f64(head[5])?,
            eps: self.parse_f64(head[6])?,
        };
        let m = self.words(n_params)?;
        let v = self.words(n_params)?;
        Ok(Adam::from_parts(config, m, v, t))
    }

    fn agent(&mut self) -> Result<SacAgent> {
        let magic = self.next_line()?;
        if magic != MAGIC {
            return Err(self.err(format!("unsupported header `{magic}`")));
        }
        let hyper: SacHyper = self.toml_block("hyper")?;
        let nets = SacNets {
            actor: self.net("actor")?,
            critic1: self.net("critic1")?,
            critic2: self.net("critic2")?,
            target_actor: self.net("target_actor")?,
            target1: self.net("target1")?,
            target2: self.net("target2")?,
        };
        let opt_actor = self.adam("actor", nets.actor.n_params())?;
        let opt_critic1 = self.adam("critic1", nets.critic1.n_params())?;
        let opt_critic2 = self.adam("critic2", nets.critic2.n_params())?;
        Ok(SacAgent {
            nets,
            opt_actor,
            opt_critic1,
            opt_critic2,
            hyper,
        })
    }

    fn vec3(&self, t: &[&str]) -> Result<Vec3> {
        Ok(Vec3::new(self.parse_f64(t[0])?, self.parse_f64(t[1])?, self.parse_f64(t[2])?))
    }

    fn end(&mut self) -> Result<()> {
        self.tagged("end").map(|_| ())
    }
}

pub fn agent_from_str(text: &str) -> Result<SacAgent> {
    let mut lines = Lines::new(text);
    let agent = lines.agent()?;
    lines.end()?;
    Ok(agent)
}

pub fn meta_from_str(text: &str) -> Result<MetaCheckpoint> {
    let mut lines = Lines::new(text);
    let global = lines.agent()?;
    let head = lines.tagged("meta")?;
    if head.len() != 3 {
        return Err(lines.err("meta line needs iteration and task count"));
    }
    let iteration = lines.parse_usize(head[1])?;
    let n_tasks = lines.parse_usize(head[2])?;
    let hyper: MetaHyper = lines.toml_block("metahyper")?;
    let mut tasks = Vec::with_capacity(n_tasks);
    for _ in 0..n_tasks {
        let t = lines.tagged("task")?;
        if t.len() < 6 {
            return Err(lines.err("task line too short"));
        }
        let seed = t[1].parse().map_err(|_| lines.err("bad task seed"))?;
        let initial = lines.vec3(&t[2..5])?;
        let k = lines.parse_usize(t[5])?;
        if t.len() != 6 + 3 * k {
            return Err(lines.err(format!("task line should list {k} users")));
        }
        let users = (0..k)
            .map(|i| lines.vec3(&t[6 + 3 * i..9 + 3 * i]))
            .collect::<Result<Vec<_>>>()?;
        tasks.push(Task { users, initial, seed });
    }
    lines.end()?;
    Ok(MetaCheckpoint {
        global,
        hyper,
        iteration,
        tasks,
    })
}

pub fn save(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
