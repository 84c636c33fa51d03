//! Command-line client for a spatial name system server.
//!
//! Exit status: 0 success, 1 transport failure, 2 protocol or usage error,
//! 3 too many results.

use std::net::SocketAddr;
use std::process::ExitCode;
use std::thread;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use sns_client::{wire_cm, Client, ClientConfig, ClientError, QueryOutcome, Shape, TransportPreference};
use sns_core::protocol::{Area, AuthToken};
use sns_core::units::parse_meters_cm;
use sns_core::{CellId, DeviceId, Interval, IntervalSet, Match, NetworkAddress};

const EXIT_TRANSPORT: u8 = 1;
const EXIT_PROTOCOL: u8 = 2;
const EXIT_TOO_MANY: u8 = 3;

#[derive(Parser)]
#[command(name = "snsctl", version, about = "Query and update a spatial name system server")]
struct Cli {
    /// Server address.
    #[arg(long, env = "SNS_SERVER", default_value = "127.0.0.1:4700")]
    server: SocketAddr,
    #[arg(long, env = "SNS_CELL_ID", default_value_t = 0)]
    cell: u64,
    /// Per-attempt timeout.
    #[arg(long, default_value_t = 200)]
    timeout_ms: u64,
    /// UDP resends before giving up.
    #[arg(long, default_value_t = 2)]
    retries: u32,
    /// Skip UDP and use TCP directly.
    #[arg(long)]
    tcp: bool,
    #[arg(long, env = "SNS_AUTH_TOKEN", hide_env_values = true)]
    token: Option<String>,
    /// Print one JSON object per line.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List devices in an area.
    Query {
        #[command(flatten)]
        area: AreaArgs,
        /// Result limit; 0 uses the server default.
        #[arg(long, default_value_t = 0)]
        max: u16,
    },
    /// Register or move a device.
    Announce {
        #[arg(long)]
        device: DeviceId,
        /// Address the device is reachable at, `ip:port`.
        #[arg(long)]
        address: SocketAddr,
        #[arg(long)]
        label: Option<String>,
        /// Must exceed the version the server holds.
        #[arg(long)]
        version: u64,
        #[command(flatten)]
        area: AreaArgs,
    },
    /// Remove a device.
    Deregister {
        #[arg(long)]
        device: DeviceId,
    },
    /// Repeat a query and print the results whenever they change.
    Watch {
        #[command(flatten)]
        area: AreaArgs,
        #[arg(long, default_value_t = 0)]
        max: u16,
        #[arg(long, default_value_t = 1000)]
        every_ms: u64,
        /// Stop after this many polls; 0 runs until interrupted.
        #[arg(long, default_value_t = 0)]
        polls: u64,
    },
}

/// An area in metres: a circle, a rectangle or raw curve intervals.
#[derive(Args)]
#[group(required = true, multiple = true)]
struct AreaArgs {
    #[arg(long, allow_hyphen_values = true, requires_all = ["y", "radius"])]
    x: Option<String>,
    #[arg(long, allow_hyphen_values = true, requires_all = ["x", "radius"])]
    y: Option<String>,
    #[arg(long, requires_all = ["x", "y"])]
    radius: Option<String>,
    /// `x0,y0,x1,y1`
    #[arg(long, allow_hyphen_values = true, conflicts_with_all = ["x", "y", "radius", "intervals"])]
    rect: Option<String>,
    /// Curve indices, e.g. `10-12,55`.
    #[arg(long, conflicts_with_all = ["x", "y", "radius"])]
    intervals: Option<IntervalSet>,
}

fn cm(text: &str) -> Result<i32, String> {
    let value = parse_meters_cm(text).map_err(|e| e.to_string())?;
    wire_cm(value).ok_or_else(|| format!("{text} is out of range"))
}

impl AreaArgs {
    fn area(&self) -> Result<Area, String> {
        if let Some(set) = &self.intervals {
            return Ok(Area::Intervals(set.intervals().to_vec()));
        }
        if let Some(rect) = &self.rect {
            let v = rect.split(',').map(|s| cm(s.trim())).collect::<Result<Vec<_>, _>>()?;
            let [x0, y0, x1, y1] = v[..] else {
                return Err("--rect takes x0,y0,x1,y1".into());
            };
            return Ok(Area::Shape(Shape::Rect {
                min_x_cm: x0.min(x1),
                min_y_cm: y0.min(y1),
                max_x_cm: x0.max(x1),
                max_y_cm: y0.max(y1),
            }));
        }
        match (&self.x, &self.y, &self.radius) {
            (Some(x), Some(y), Some(r)) => {
                let radius = u32::try_from(cm(r)?).map_err(|_| "radius must be positive")?;
                Ok(Area::Shape(Shape::Circle {
                    center_x_cm: cm(x)?,
                    center_y_cm: cm(y)?,
                    radius_cm: radius,
                }))
            }
            _ => Err("give --x --y --radius, --rect or --intervals".into()),
        }
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        Failure {
            code: if e.is_transport() {
                EXIT_TRANSPORT
            } else {
                EXIT_PROTOCOL
            },
            message: e.to_string(),
        }
    }
}

fn usage(message: String) -> Failure {
    Failure {
        code: EXIT_PROTOCOL,
        message,
    }
}

fn print_matches(found: &[Match], as_json: bool) {
    for m in found {
        if as_json {
            println!(
                "{}",
                json!({
                    "device_id": m.device_id.to_string(),
                    "address": m.address.socket_addr().to_string(),
                    "label": m.address.label,
                    "matched": m.matched.to_string(),
                })
            );
        } else {
            println!("{}\t{}\t{}", m.device_id, m.address, m.matched);
        }
    }
}

fn run_query(client: &mut Client, area: &Area, max: u16) -> Result<QueryOutcome, ClientError> {
    match area {
        Area::Shape(shape) => client.query(*shape, max),
        Area::Intervals(list) => client.query_intervals(list.clone(), max),
    }
}

fn too_many(count: u64, as_json: bool) -> Failure {
    if as_json {
        println!("{}", json!({ "too_many": count }));
    }
    Failure {
        code: EXIT_TOO_MANY,
        message: format!("too many results ({count}); narrow the area or raise --max"),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut config = ClientConfig::new(cli.server);
    config.cell_id = CellId(cli.cell);
    config.timeout = Duration::from_millis(cli.timeout_ms.max(1));
    config.retries = cli.retries;
    if cli.tcp {
        config.transport = TransportPreference::Tcp;
    }
    if let Some(t) = cli.token {
        config.auth = Some(AuthToken::new(t.into_bytes()).map_err(|e| usage(e.to_string()))?);
    }
    let mut client = Client::new(config)?;
    let as_json = cli.json;
    match cli.command {
        Command::Query { area, max } => {
            let area = area.area().map_err(usage)?;
            match run_query(&mut client, &area, max)? {
                QueryOutcome::Found(found) => print_matches(&found, as_json),
                QueryOutcome::TooMany { count } => return Err(too_many(count, as_json)),
            }
        }
        Command::Announce {
            device,
            address,
            label,
            version,
            area,
        } => {
            let area = area.area().map_err(usage)?;
            let address = NetworkAddress::new(address.ip(), address.port(), label)
                .map_err(|e| usage(e.to_string()))?;
            match client.announce(device, address, area, version) {
                Ok(()) if as_json => println!("{}", json!({ "ok": true })),
                Ok(()) => println!("ok"),
                Err(ClientError::Stale { current }) if as_json => {
                    println!("{}", json!({ "stale": true, "current": current }));
                    return Err(ClientError::Stale { current }.into());
                }
                Err(e) => return Err(e.into()),
            }
        }
        Command::Deregister { device } => {
            client.deregister(device)?;
            if as_json {
                println!("{}", json!({ "ok": true }));
            } else {
                println!("ok");
            }
        }
        Command::Watch {
            area,
            max,
            every_ms,
            polls,
        } => {
            let area = area.area().map_err(usage)?;
            let mut last: Option<Vec<(DeviceId, String, Vec<Interval>)>> = None;
            let mut n = 0u64;
            loop {
                match run_query(&mut client, &area, max) {
                    Ok(QueryOutcome::Found(found)) => {
                        let key: Vec<_> = found
                            .iter()
                            .map(|m| (m.device_id, m.address.to_string(), m.matched.intervals().to_vec()))
                            .collect();
                        if last.as_ref() != Some(&key) {
                            if !as_json {
                                println!("-- {} device(s)", found.len());
                            }
                            print_matches(&found, as_json);
                            last = Some(key);
                        }
                    }
                    Ok(QueryOutcome::TooMany { count }) => eprintln!("too many results ({count})"),
                    Err(e) if e.is_transport() => eprintln!("snsctl: {e}"),
                    Err(e) => return Err(e.into()),
                }
                n += 1;
                if polls != 0 && n >= polls {
                    break;
                }
                thread::sleep(Duration::from_millis(every_ms));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("snsctl: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
