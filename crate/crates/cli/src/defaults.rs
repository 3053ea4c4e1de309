//! Default values of every command-line and configuration parameter.
//!
//! | key              | default  | meaning                                         |
//! |------------------|----------|-------------------------------------------------|
//! | `samples`        | 512      | sample size per replicate of the smoothed `W_2` |
//! | `reps`           | 32       | replicates of sampled estimators                |
//! | `reference-size` | 4096     | atoms of the reference in `rate`                |
//! | `instances`      | 500      | corpus size of `calibrate`                      |
//! | `eps`            | 0.1      | noise regularisation                            |
//! | `particles`      | 10000    | particles per simulation                        |
//! | `steps`          | 100      | Euler steps over the remaining horizon          |
//! | `t`              | 0        | initial time                                    |
//! | `n`              | 1        | players of the finite problem                   |
//! | `m`              | 8        | mollification scale                             |
//! | `support`        | 1        | radius of the region of interest of grids       |
//! | `points`         | 101      | grid nodes per axis                             |
//! | `scheme`         | explicit | time stepping of the grid solver                |
//! | `nodes`          | 8        | quadrature nodes per axis in mollification      |
//! | `tolerance`      | 0.05     | declared tolerance of `chaos` and `ito-check`   |

pub const SAMPLES: &str = "512";
pub const REPS: &str = "32";
pub const REFERENCE_SIZE: &str = "4096";
pub const INSTANCES: &str = "500";
pub const EPS: &str = "0.1";
pub const PARTICLES: &str = "10000";
pub const STEPS: &str = "100";
pub const T: &str = "0";
pub const N: &str = "1";
pub const M: &str = "8";
pub const SUPPORT: &str = "1";
pub const POINTS: &str = "101";
pub const NODES: &str = "8";
pub const TOLERANCE: &str = "0.05";
pub const OUT_DIR: &str = ".";
/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "BELLMAN_OUT_DIR";
