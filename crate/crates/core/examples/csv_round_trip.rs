//! Write a problem to CSV/JSON, read it back, and fit it.

use rankreg::datagen::{Design, Noise, Signal};
use rankreg::io::{parse_groups, read_matrix, read_vector, write_matrix, write_vector};
use rankreg::metrics::{generate_replicate, SimConfig};
use rankreg::{fit, ProblemData, SolverOptions, WeightRule};

fn main() -> rankreg::Result<()> {
    let rep = generate_replicate(&SimConfig::new(Design::C3, 50, 60, Signal::S2, Noise::E4), 0)?;
    let dir = std::env::temp_dir().join("rankreg-example");
    std::fs::create_dir_all(&dir).map_err(|e| rankreg::Error::Io { path: dir.clone(), source: e })?;
    let (xp, yp) = (dir.join("x.csv"), dir.join("y.csv"));
    let create = |p: &std::path::Path| {
        std::fs::File::create(p).map_err(|e| rankreg::Error::Io { path: p.to_path_buf(), source: e })
    };
    write_matrix(create(&xp)?, &rep.data.x)?;
    write_vector(create(&yp)?, rep.data.y.as_slice())?;

    let x = read_matrix(&xp)?;
    let y = read_vector(&yp)?;
    let spec = parse_groups("[[1,2,3,4,5],[6,7,8,9,10],[11,12,13,14,15,16,17,18,19,20]]", "inline".as_ref())?;
    let mut groups = spec.groups;
    groups.extend((20..60).map(|j| vec![j]));
    let gs = rankreg::GroupStructure::with_rule(60, groups, WeightRule::SqrtSize)?;
    let sol = fit(&ProblemData::new(x, y, gs.clone())?, &SolverOptions::default())?;
    println!("read back {}x{}; nonzero groups {:?}", rep.data.n(), rep.data.p(), sol.nonzero_groups(&gs));
    Ok(())
}
