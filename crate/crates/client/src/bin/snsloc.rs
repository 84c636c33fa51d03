//! Converts DNS LOC records between presentation text and RDATA hex.

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;
use sns_core::loc::{decode_rdata, encode_rdata, parse_loc_text, print_loc};
use sns_core::LocRecord;

#[derive(Parser)]
#[command(name = "snsloc", version, about = "DNS LOC record codec")]
struct Cli {
    /// Print JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse presentation text and show the wire fields.
    Parse { text: Vec<String> },
    /// Print RDATA hex as canonical presentation text.
    Print { hex: String },
    /// Encode presentation text as RDATA hex.
    Encode { text: Vec<String> },
    /// Decode RDATA hex and show the wire fields.
    Decode { hex: String },
}

fn fields(rec: &LocRecord, as_json: bool) -> String {
    let rdata = hex::encode(encode_rdata(rec));
    if as_json {
        return json!({
            "text": print_loc(rec),
            "rdata": rdata,
            "latitude": rec.latitude_wire(),
            "longitude": rec.longitude_wire(),
            "altitude": rec.altitude_wire(),
            "size": format!("0x{:02x}", rec.size().byte()),
            "horiz_pre": format!("0x{:02x}", rec.horiz_pre().byte()),
            "vert_pre": format!("0x{:02x}", rec.vert_pre().byte()),
        })
        .to_string();
    }
    format!(
        "text       {}\nrdata      {rdata}\nlatitude   {}\nlongitude  {}\naltitude   {}\nsize       0x{:02x}\nhoriz_pre  0x{:02x}\nvert_pre   0x{:02x}",
        print_loc(rec),
        rec.latitude_wire(),
        rec.longitude_wire(),
        rec.altitude_wire(),
        rec.size().byte(),
        rec.horiz_pre().byte(),
        rec.vert_pre().byte(),
    )
}

fn from_hex(text: &str) -> Result<LocRecord, String> {
    let clean: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let bytes = hex::decode(clean).map_err(|e| format!("bad hex: {e}"))?;
    decode_rdata(&bytes).map_err(|e| e.to_string())
}

fn run(cli: Cli) -> Result<String, String> {
    let j = cli.json;
    match cli.command {
        Command::Parse { text } => {
            let rec = parse_loc_text(&text.join(" ")).map_err(|e| e.to_string())?;
            Ok(fields(&rec, j))
        }
        Command::Encode { text } => {
            let rec = parse_loc_text(&text.join(" ")).map_err(|e| e.to_string())?;
            let rdata = hex::encode(encode_rdata(&rec));
            Ok(if j { json!({ "rdata": rdata }).to_string() } else { rdata })
        }
        Command::Print { hex } => {
            let text = print_loc(&from_hex(&hex)?);
            Ok(if j { json!({ "text": text }).to_string() } else { text })
        }
        Command::Decode { hex } => Ok(fields(&from_hex(&hex)?, j)),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(out) => {
            println!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("snsloc: {e}");
            ExitCode::from(2)
        }
    }
}
