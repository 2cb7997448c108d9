use std::fmt::Write;

use crate::error::CliError;
use crate::output::{num, OutputDir};

use super::{simulate_one, Model};

/// `forward.csv` with `path_id,t,x,r` and `bonds.csv` with `path_id,t,T,P,Z`.
pub fn run(model: &Model, out: &mut OutputDir) -> Result<(), CliError> {
    let mc = model.r.mc()?;
    let src = model.source()?;
    let sim = model.simulator()?;
    let tg = model.r.t_grid;
    let xg = model.r.x_grid;
    let mat = model.r.bond_steps();
    let mut fwd = out.open("forward.csv")?;
    let mut bonds = out.open("bonds.csv")?;
    fwd.line("path_id,t,x,r")?;
    bonds.line("path_id,t,T,P,Z")?;
    src.for_each_ordered(
        mc.n_paths,
        |p, block| {
            let s = simulate_one(model, &sim, &src, block)?;
            let mut f = String::new();
            let mut b = String::new();
            for i in 0..=tg.n_steps() {
                let t = num(tg.point(i));
                for (k, r) in s.forward.curve(0, i).iter().enumerate() {
                    writeln!(f, "{p},{t},{},{}", num(xg.point(k)), num(*r)).unwrap();
                }
                for m in i..=mat {
                    let (pv, zv) = (s.bonds.value(0, i, m), s.discounted.value(0, i, m));
                    writeln!(b, "{p},{t},{},{},{}", num(s.bonds.maturity(m)), num(pv), num(zv)).unwrap();
                }
            }
            Ok((f, b))
        },
        |_, (f, b)| {
            fwd.write_str(&f)?;
            bonds.write_str(&b)
        },
    )?;
    out.close(fwd)?;
    out.close(bonds)
}
