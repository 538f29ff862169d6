//! Deterministic simulation of image-based cheque clearing with shared images.
//!
//! Six roles exchange [`CtsMessage`]s over an in-process FIFO network. The
//! presenting side acts as dealer: its CHI splits the captured cheque and
//! publishes the commitment, SC1 travels with the MICR data through the
//! clearing house, SC2 goes to the customer, and SC3 is kept by the presenting
//! bank until the drawee asks for it. The drawee's CHI verifies SC1 and SC3
//! against the commitment before it reconstructs anything.
//!
//! Message flow, tagged with workflow step numbers:
//!
//! ```text
//!  1  customer        -> presenting_bank  submit_cheque      (cheque image)
//!  3  presenting_bank -> presenting_chi   data_transfer      (image, MICR)
//!  4  presenting_chi  -> presenting_bank  share_transfer     (SC3), params
//!  5  presenting_chi  -> clearing_house   share_transfer     (SC1), MICR, params
//!  6  presenting_chi  -> customer         share_transfer     (SC2)
//!  7  clearing_house  -> drawee_chi       share_transfer     (SC1), MICR, params
//!  7  drawee_chi      -> drawee_bank      data_transfer      (MICR)
//!  8  drawee_bank     -> drawee_chi       share_request
//!  8  drawee_chi      -> presenting_bank  share_request
//!  9  presenting_bank -> drawee_bank      share_transfer     (SC3)
//! 10  drawee_bank     -> drawee_chi       share_transfer     (SC3)
//! 10  drawee_chi      -> drawee_bank      verification_result
//! 10  drawee_chi      -> holder           resend_request     (cheater only)
//! 11  drawee_chi      -> drawee_bank      data_transfer      (image, MICR)
//! 12  drawee_bank     -> clearing_house   processing_result
//! 12  clearing_house  -> presenting_bank  processing_result
//! 12  customer        -> presenting_bank  inquiry_request    (SC2)
//! 12  presenting_bank -> customer         inquiry_response
//! ```
//!
//! Step 2 (capture) happens inside the presenting bank and emits nothing.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cheat_detect::{make_params, verify, CheatError, Prime, PublicParams, Verdict};
use crate::image_io::{
    check_tamper, mse, read_pgm, read_share, tamper_share, write_pgm, write_share, GrayImage,
    PgmError, Scheme, Share, ShareFormatError, ShareIndex,
};
use crate::sharing::{reconstruct, split};

/// Stubbed result the drawee bank reports once it has the cheque image.
pub const PROCESSED_STATUS: &str = "processed";

/// `(target share index, step)` combinations at which a share is in transit
/// between distinct parties.
pub const ADVERSARY_POINTS: [(u8, u8); 5] = [(1, 5), (1, 7), (2, 6), (3, 9), (3, 10)];

#[derive(Debug, Error)]
pub enum SimError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cheque image: {0}")]
    Image(#[from] PgmError),
    #[error("scenario config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("tamper spec: {0}")]
    Tamper(String),
    #[error("verification parameters have not been published")]
    ParamsMissing,
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error(transparent)]
    Cheat(#[from] CheatError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Customer,
    PresentingBank,
    PresentingChi,
    ClearingHouse,
    DraweeChi,
    DraweeBank,
}

impl Role {
    pub const ALL: [Role; 6] = [
        Role::Customer,
        Role::PresentingBank,
        Role::PresentingChi,
        Role::ClearingHouse,
        Role::DraweeChi,
        Role::DraweeBank,
    ];

    /// Roles on the dealer side, allowed to see every share.
    pub fn is_dealer(self) -> bool {
        matches!(self, Role::PresentingBank | Role::PresentingChi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    SubmitCheque,
    ShareTransfer,
    DataTransfer,
    ShareRequest,
    InquiryRequest,
    InquiryResponse,
    VerificationResult,
    ProcessingResult,
    ResendRequest,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    Empty,
    /// Binary PGM.
    Image(Vec<u8>),
    /// `SIS1` share container.
    Share(Vec<u8>),
    /// Params file text.
    Params(Vec<u8>),
    Micr(String),
    Text(String),
}

impl Payload {
    pub fn bytes(&self) -> &[u8] {
        match self {
            Payload::Empty => &[],
            Payload::Image(b) | Payload::Share(b) | Payload::Params(b) => b,
            Payload::Micr(s) | Payload::Text(s) => s.as_bytes(),
        }
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.bytes()))
    }

    fn file_extension(&self) -> Option<&'static str> {
        match self {
            Payload::Image(_) => Some("pgm"),
            Payload::Share(_) => Some("shr"),
            Payload::Params(_) => Some("params"),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CtsMessage {
    pub msg_id: u64,
    pub step: u8,
    pub from: Role,
    pub to: Role,
    pub kind: MessageKind,
    pub payload: Payload,
}

#[derive(Serialize)]
struct TranscriptRecord<'a> {
    msg_id: u64,
    step: u8,
    from: Role,
    to: Role,
    kind: MessageKind,
    payload_digest: &'a str,
    payload_size: usize,
}

impl CtsMessage {
    /// One NDJSON transcript line, without the trailing newline.
    pub fn transcript_line(&self) -> String {
        let digest = self.payload.digest();
        serde_json::to_string(&TranscriptRecord {
            msg_id: self.msg_id,
            step: self.step,
            from: self.from,
            to: self.to,
            kind: self.kind,
            payload_digest: &digest,
            payload_size: self.payload.bytes().len(),
        })
        .expect("transcript record serializes")
    }
}

/// In-flight tampering of one share.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Adversary {
    pub target: ShareIndex,
    /// Byte offset into the share's pixel payload.
    pub offset: usize,
    pub step: u8,
    pub xor_byte: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioConfig {
    pub scheme: Scheme,
    pub seed: u64,
    pub adversary: Option<Adversary>,
    pub image_path: PathBuf,
    pub micr: String,
    pub prime: Prime,
}

pub const DEFAULT_MICR: &str = "123456 600002003 000001 31";

impl ScenarioConfig {
    pub fn new(scheme: Scheme, seed: u64, image_path: impl Into<PathBuf>) -> Self {
        Self {
            scheme,
            seed,
            adversary: None,
            image_path: image_path.into(),
            micr: DEFAULT_MICR.to_owned(),
            prime: Prime::default(),
        }
    }

    pub fn with_adversary(mut self, adversary: Adversary) -> Self {
        self.adversary = Some(adversary);
        self
    }

    /// Parses the `key=value` scenario format. Relative image paths resolve
    /// against `base_dir`.
    ///
    /// ```text
    /// scheme=partition
    /// seed=42
    /// image=cheque.pgm
    /// micr=123456 600002003 000001 31   # optional
    /// prime=2305843009213693951         # optional
    /// adversary.target=3                # the four adversary keys are optional
    /// adversary.offset=0
    /// adversary.step=9
    /// adversary.xor=255
    /// ```
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, SimError> {
        let mut fields: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split_once('#').map_or(raw, |(c, _)| c).trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| SimError::Config {
                line,
                message: format!("expected key=value, got `{content}`"),
            })?;
            let key = key.trim();
            const KNOWN: [&str; 9] = [
                "scheme",
                "seed",
                "image",
                "micr",
                "prime",
                "adversary.target",
                "adversary.offset",
                "adversary.step",
                "adversary.xor",
            ];
            if !KNOWN.contains(&key) {
                return Err(SimError::Config {
                    line,
                    message: format!("unknown key `{key}`"),
                });
            }
            if fields.insert(key, (line, value.trim())).is_some() {
                return Err(SimError::Config {
                    line,
                    message: format!("duplicate key `{key}`"),
                });
            }
        }

        let last_line = text.lines().count();
        let required = |key: &str| {
            fields.get(key).copied().ok_or_else(|| SimError::Config {
                line: last_line,
                message: format!("missing key `{key}`"),
            })
        };
        fn number<T: std::str::FromStr>(
            (line, v): (usize, &str),
            key: &str,
        ) -> Result<T, SimError> {
            v.parse().map_err(|_| SimError::Config {
                line,
                message: format!("`{key}` must be a number, got `{v}`"),
            })
        }

        let (line, scheme) = required("scheme")?;
        let scheme = scheme
            .parse()
            .map_err(|message| SimError::Config { line, message })?;
        let seed: u64 = number(required("seed")?, "seed")?;
        let image = PathBuf::from(required("image")?.1);
        let image_path = if image.is_absolute() {
            image
        } else {
            base_dir.join(image)
        };
        let micr = fields
            .get("micr")
            .map_or(DEFAULT_MICR, |(_, v)| v)
            .to_owned();
        let prime = match fields.get("prime") {
            Some(&entry) => Prime::new(number(entry, "prime")?).map_err(|e| SimError::Config {
                line: entry.0,
                message: e.to_string(),
            })?,
            None => Prime::default(),
        };

        let adv_keys = ["adversary.target", "adversary.offset", "adversary.step"];
        let present = adv_keys.iter().filter(|k| fields.contains_key(*k)).count();
        let adversary = match present {
            0 if !fields.contains_key("adversary.xor") => None,
            3 => {
                let target_entry = fields["adversary.target"];
                let target: u8 = number(target_entry, "adversary.target")?;
                let target = ShareIndex::new(target).ok_or_else(|| {
                    SimError::Tamper(format!("target share {target} outside 1..=3"))
                })?;
                let xor_byte = match fields.get("adversary.xor") {
                    Some(&entry) => number(entry, "adversary.xor")?,
                    None => 0xFF,
                };
                Some(Adversary {
                    target,
                    offset: number(fields["adversary.offset"], "adversary.offset")?,
                    step: number(fields["adversary.step"], "adversary.step")?,
                    xor_byte,
                })
            }
            _ => {
                return Err(SimError::Tamper(
                    "adversary needs target, offset and step together".into(),
                ))
            }
        };

        Ok(Self {
            scheme,
            seed,
            adversary,
            image_path,
            micr,
            prime,
        })
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = fs::read_to_string(path).map_err(|source| SimError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Accepted,
    Rejected(ShareIndex),
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Accepted => f.write_str("Accepted"),
            Outcome::Rejected(i) => write!(f, "Rejected({i})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InquiryResponse {
    Granted { status: String },
    AuthenticationFailed,
}

impl InquiryResponse {
    fn to_text(&self) -> String {
        match self {
            InquiryResponse::Granted { status } => format!("granted: {status}"),
            InquiryResponse::AuthenticationFailed => "authentication failed".to_owned(),
        }
    }
}

/// Authenticates a customer by their copy of SC2 and, if genuine, releases the
/// cheque's processing status.
pub fn customer_inquiry(
    sc2: &Share,
    params: Option<&PublicParams>,
    status: &str,
) -> Result<InquiryResponse, SimError> {
    let params = params.ok_or(SimError::ParamsMissing)?;
    let report = verify(params, &[(ShareIndex::TWO.get(), sc2)])?;
    Ok(match report.verdict(2) {
        Some(Verdict::Honest) => InquiryResponse::Granted {
            status: status.to_owned(),
        },
        _ => InquiryResponse::AuthenticationFailed,
    })
}

#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub transcript: Vec<CtsMessage>,
    pub outcome: Outcome,
    pub captured: GrayImage,
    pub reconstructed: Option<GrayImage>,
    pub inquiry: Option<InquiryResponse>,
    pub params: PublicParams,
}

impl ScenarioResult {
    /// MSE between captured and reconstructed cheque, when reconstruction ran.
    pub fn mse(&self) -> Option<f64> {
        self.reconstructed
            .as_ref()
            .map(|r| mse(&self.captured, r).expect("reconstruction keeps dimensions"))
    }

    pub fn transcript_ndjson(&self) -> String {
        self.transcript
            .iter()
            .map(|m| m.transcript_line() + "\n")
            .collect()
    }

    /// Writes `transcript.ndjson` into `dir` plus one file per binary payload,
    /// named by its digest.
    pub fn write_transcript(&self, dir: &Path) -> std::io::Result<PathBuf> {
        fs::create_dir_all(dir)?;
        for m in &self.transcript {
            if let Some(ext) = m.payload.file_extension() {
                let path = dir.join(format!("{}.{ext}", m.payload.digest()));
                if !path.exists() {
                    fs::write(path, m.payload.bytes())?;
                }
            }
        }
        let path = dir.join("transcript.ndjson");
        fs::write(&path, self.transcript_ndjson())?;
        Ok(path)
    }
}

#[derive(Default)]
struct Node {
    mailbox: VecDeque<CtsMessage>,
    shares: BTreeMap<u8, Share>,
    params: Option<PublicParams>,
    micr: Option<String>,
    image: Option<GrayImage>,
    status: Option<String>,
}

struct Simulator {
    config: ScenarioConfig,
    rng: ChaCha20Rng,
    next_id: u64,
    in_flight: VecDeque<CtsMessage>,
    transcript: Vec<CtsMessage>,
    nodes: BTreeMap<Role, Node>,
    outcome: Option<Outcome>,
    reconstructed: Option<GrayImage>,
}

impl Simulator {
    fn new(config: ScenarioConfig) -> Self {
        let rng = ChaCha20Rng::seed_from_u64(config.seed);
        Self {
            config,
            rng,
            next_id: 0,
            in_flight: VecDeque::new(),
            transcript: Vec::new(),
            nodes: Role::ALL.iter().map(|&r| (r, Node::default())).collect(),
            outcome: None,
            reconstructed: None,
        }
    }

    fn node(&mut self, role: Role) -> &mut Node {
        self.nodes.get_mut(&role).expect("every role has a node")
    }

    fn send(&mut self, step: u8, from: Role, to: Role, kind: MessageKind, mut payload: Payload) {
        if let (Some(adv), Payload::Share(bytes)) = (self.config.adversary, &payload) {
            if kind == MessageKind::ShareTransfer && step == adv.step {
                let share = read_share(bytes).expect("senders only emit valid shares");
                if share.index() == adv.target {
                    let tampered = tamper_share(&share, adv.offset, adv.xor_byte)
                        .expect("tamper spec validated before the run");
                    payload = Payload::Share(write_share(&tampered));
                }
            }
        }
        let msg = CtsMessage {
            msg_id: self.next_id,
            step,
            from,
            to,
            kind,
            payload,
        };
        self.next_id += 1;
        self.transcript.push(msg.clone());
        self.in_flight.push_back(msg);
    }

    fn run_until_quiet(&mut self) -> Result<(), SimError> {
        while let Some(msg) = self.in_flight.pop_front() {
            let to = msg.to;
            self.node(to).mailbox.push_back(msg);
            while let Some(msg) = self.node(to).mailbox.pop_front() {
                self.handle(msg)?;
            }
        }
        Ok(())
    }

    fn handle(&mut self, msg: CtsMessage) -> Result<(), SimError> {
        use MessageKind::*;
        use Role::*;

        let here = msg.to;
        match (here, msg.kind, msg.payload) {
            (PresentingBank, SubmitCheque, Payload::Image(bytes)) => {
                // step 2: capture image and MICR band
                let image = read_pgm(&bytes)?;
                let micr = self.config.micr.clone();
                let node = self.node(PresentingBank);
                node.image = Some(image);
                node.micr = Some(micr.clone());
                self.send(
                    3,
                    PresentingBank,
                    PresentingChi,
                    DataTransfer,
                    Payload::Image(bytes),
                );
                self.send(
                    3,
                    PresentingBank,
                    PresentingChi,
                    DataTransfer,
                    Payload::Micr(micr),
                );
            }
            (PresentingChi, DataTransfer, Payload::Image(bytes)) => {
                self.node(PresentingChi).image = Some(read_pgm(&bytes)?);
            }
            (PresentingChi, DataTransfer, Payload::Micr(micr)) => {
                let image = self.node(PresentingChi).image.clone().ok_or_else(|| {
                    SimError::Protocol("presenting CHI received MICR before the image".into())
                })?;
                self.deal(&image, micr)?;
            }
            (_, ShareTransfer, Payload::Share(bytes)) => {
                let share = read_share(&bytes).map_err(|e| {
                    SimError::Protocol(format!("{here:?} received an unreadable share: {e}"))
                })?;
                let index = share.index();
                self.node(here).shares.insert(index.get(), share.clone());
                match (here, index.get()) {
                    (ClearingHouse, 1) | (DraweeChi, 1) => self.forward_when_complete(here)?,
                    (DraweeBank, 3) => self.send(
                        10,
                        DraweeBank,
                        DraweeChi,
                        ShareTransfer,
                        Payload::Share(bytes),
                    ),
                    (DraweeChi, 3) => self.verify_and_reconstruct()?,
                    _ => {}
                }
            }
            (_, DataTransfer, Payload::Params(bytes)) => {
                let text = String::from_utf8(bytes)
                    .map_err(|_| SimError::Protocol("params are not UTF-8".into()))?;
                let params = PublicParams::from_text(&text)
                    .map_err(|e| SimError::Protocol(format!("bad params: {e}")))?;
                self.node(here).params = Some(params);
                self.forward_when_complete(here)?;
            }
            (DraweeBank, DataTransfer, Payload::Micr(micr)) if msg.step == 7 => {
                self.node(DraweeBank).micr = Some(micr);
                self.send(8, DraweeBank, DraweeChi, ShareRequest, Payload::Empty);
            }
            (DraweeBank, DataTransfer, Payload::Image(bytes)) => {
                self.node(DraweeBank).image = Some(read_pgm(&bytes)?);
            }
            (DraweeBank, DataTransfer, Payload::Micr(micr)) => {
                // step 11: image and data in hand; cheque processing proper is stubbed
                if self.node(DraweeBank).image.is_none() {
                    return Err(SimError::Protocol(
                        "drawee bank has no image to process".into(),
                    ));
                }
                self.node(DraweeBank).micr = Some(micr);
                self.send(
                    12,
                    DraweeBank,
                    ClearingHouse,
                    ProcessingResult,
                    Payload::Text(PROCESSED_STATUS.into()),
                );
            }
            (_, DataTransfer, Payload::Micr(micr)) => {
                self.node(here).micr = Some(micr);
                self.forward_when_complete(here)?;
            }
            (DraweeChi, ShareRequest, Payload::Empty) => {
                self.send(8, DraweeChi, PresentingBank, ShareRequest, Payload::Empty);
            }
            (PresentingBank, ShareRequest, _) => {
                // requests are not authenticated; any requester gets SC3
                let sc3 = self
                    .node(PresentingBank)
                    .shares
                    .get(&3)
                    .cloned()
                    .ok_or_else(|| SimError::Protocol("presenting bank holds no SC3".into()))?;
                self.send(
                    9,
                    PresentingBank,
                    DraweeBank,
                    ShareTransfer,
                    Payload::Share(write_share(&sc3)),
                );
            }
            (ClearingHouse, ProcessingResult, payload) => {
                self.send(12, ClearingHouse, PresentingBank, ProcessingResult, payload);
            }
            (PresentingBank, ProcessingResult, Payload::Text(status)) => {
                self.node(PresentingBank).status = Some(status);
            }
            (PresentingBank, InquiryRequest, Payload::Share(bytes)) => {
                let node = self.node(PresentingBank);
                let status = node.status.clone().unwrap_or_else(|| "pending".into());
                let response = match read_share(&bytes) {
                    Ok(sc2) => customer_inquiry(&sc2, node.params.as_ref(), &status)?,
                    Err(_) => crate::cts_sim::InquiryResponse::AuthenticationFailed,
                };
                self.send(
                    12,
                    PresentingBank,
                    Customer,
                    InquiryResponse,
                    Payload::Text(response.to_text()),
                );
            }
            (Customer, InquiryResponse, Payload::Text(_))
            | (_, VerificationResult, _)
            | (_, ResendRequest, _) => {}
            (to, kind, payload) => {
                return Err(SimError::Protocol(format!(
                    "{to:?} cannot handle {kind:?} carrying {} bytes",
                    payload.bytes().len()
                )))
            }
        }
        Ok(())
    }

    /// Step 4-6 at the presenting CHI.
    fn deal(&mut self, image: &GrayImage, micr: String) -> Result<(), SimError> {
        use MessageKind::*;
        use Role::*;

        let triple = split(self.config.scheme, image, &mut self.rng);
        let shares = [triple.sc1.clone(), triple.sc2.clone(), triple.sc3.clone()];
        let params = make_params(&shares, self.config.prime, &mut self.rng)?;
        let params_bytes = params.to_text().into_bytes();
        let node = self.node(PresentingChi);
        node.params = Some(params);
        node.micr = Some(micr.clone());
        for s in &shares {
            node.shares.insert(s.index().get(), s.clone());
        }

        let [sc1, sc2, sc3] = shares.map(|s| write_share(&s));
        self.send(
            4,
            PresentingChi,
            PresentingBank,
            ShareTransfer,
            Payload::Share(sc3),
        );
        self.send(
            4,
            PresentingChi,
            PresentingBank,
            DataTransfer,
            Payload::Params(params_bytes.clone()),
        );
        self.send(
            5,
            PresentingChi,
            ClearingHouse,
            ShareTransfer,
            Payload::Share(sc1),
        );
        self.send(
            5,
            PresentingChi,
            ClearingHouse,
            DataTransfer,
            Payload::Micr(micr),
        );
        self.send(
            5,
            PresentingChi,
            ClearingHouse,
            DataTransfer,
            Payload::Params(params_bytes),
        );
        self.send(
            6,
            PresentingChi,
            Customer,
            ShareTransfer,
            Payload::Share(sc2),
        );
        Ok(())
    }

    /// Clearing house (step 7 out) and drawee CHI (step 7 notify) act once they
    /// hold SC1, MICR data and params.
    fn forward_when_complete(&mut self, role: Role) -> Result<(), SimError> {
        use MessageKind::*;
        use Role::*;

        if !matches!(role, ClearingHouse | DraweeChi) {
            return Ok(());
        }
        let node = self.node(role);
        let (Some(sc1), Some(micr), Some(params)) =
            (node.shares.get(&1), node.micr.clone(), node.params.as_ref())
        else {
            return Ok(());
        };
        let sc1 = write_share(sc1);
        let params = params.to_text().into_bytes();
        match role {
            ClearingHouse => {
                self.send(
                    7,
                    ClearingHouse,
                    DraweeChi,
                    ShareTransfer,
                    Payload::Share(sc1),
                );
                self.send(
                    7,
                    ClearingHouse,
                    DraweeChi,
                    DataTransfer,
                    Payload::Micr(micr),
                );
                self.send(
                    7,
                    ClearingHouse,
                    DraweeChi,
                    DataTransfer,
                    Payload::Params(params),
                );
            }
            _ => self.send(7, DraweeChi, DraweeBank, DataTransfer, Payload::Micr(micr)),
        }
        Ok(())
    }

    /// Step 10-11 at the drawee CHI.
    fn verify_and_reconstruct(&mut self) -> Result<(), SimError> {
        use MessageKind::*;
        use Role::*;

        let node = self.node(DraweeChi);
        let params = node.params.clone().ok_or(SimError::ParamsMissing)?;
        let (Some(sc1), Some(sc3)) = (node.shares.get(&1).cloned(), node.shares.get(&3).cloned())
        else {
            return Err(SimError::Protocol(
                "drawee CHI is missing SC1 or SC3".into(),
            ));
        };
        let micr = node.micr.clone().unwrap_or_default();

        let report = verify(&params, &[(1, &sc1), (3, &sc3)])?;
        self.send(
            10,
            DraweeChi,
            DraweeBank,
            VerificationResult,
            Payload::Text(report.to_string()),
        );

        let cheaters = report.cheaters();
        if let Some(&first) = cheaters.first() {
            for &j in &cheaters {
                let holder = if j == 1 {
                    ClearingHouse
                } else {
                    PresentingBank
                };
                self.send(
                    10,
                    DraweeChi,
                    holder,
                    ResendRequest,
                    Payload::Text(format!("resend SC{j}")),
                );
            }
            self.outcome = Some(Outcome::Rejected(
                ShareIndex::new(first).expect("verified indices are 1..=3"),
            ));
            return Ok(());
        }

        let image = reconstruct(&sc1, &sc3)
            .map_err(|e| SimError::Protocol(format!("reconstruction failed: {e}")))?;
        self.send(
            11,
            DraweeChi,
            DraweeBank,
            DataTransfer,
            Payload::Image(write_pgm(&image)),
        );
        self.send(11, DraweeChi, DraweeBank, DataTransfer, Payload::Micr(micr));
        self.node(DraweeChi).image = Some(image.clone());
        self.reconstructed = Some(image);
        self.outcome = Some(Outcome::Accepted);
        Ok(())
    }
}

fn validate_adversary(adv: &Adversary, scheme: Scheme, image: &GrayImage) -> Result<(), SimError> {
    if !ADVERSARY_POINTS.contains(&(adv.target.get(), adv.step)) {
        return Err(SimError::Tamper(format!(
            "share {} is not in transit at step {}",
            adv.target, adv.step
        )));
    }
    check_tamper(
        scheme,
        image.pixels().len() as u64,
        adv.offset,
        adv.xor_byte,
    )
    .map_err(|e: ShareFormatError| SimError::Tamper(e.to_string()))
}

/// Runs the whole clearing workflow for an already loaded cheque image.
pub fn run_scenario_with_image(
    config: ScenarioConfig,
    cheque: GrayImage,
) -> Result<ScenarioResult, SimError> {
    use MessageKind::*;
    use Role::*;

    if let Some(adv) = &config.adversary {
        validate_adversary(adv, config.scheme, &cheque)?;
    }
    let mut sim = Simulator::new(config);
    sim.send(
        1,
        Customer,
        PresentingBank,
        SubmitCheque,
        Payload::Image(write_pgm(&cheque)),
    );
    sim.run_until_quiet()?;

    let outcome = sim
        .outcome
        .ok_or_else(|| SimError::Protocol("workflow stopped before verification".into()))?;
    if outcome == Outcome::Accepted {
        let sc2 = sim
            .node(Customer)
            .shares
            .get(&2)
            .cloned()
            .ok_or_else(|| SimError::Protocol("customer never received SC2".into()))?;
        sim.send(
            12,
            Customer,
            PresentingBank,
            InquiryRequest,
            Payload::Share(write_share(&sc2)),
        );
        sim.run_until_quiet()?;
    }

    let inquiry = sim
        .transcript
        .iter()
        .rev()
        .find(|m| m.kind == InquiryResponse)
        .map(|m| match &m.payload {
            Payload::Text(t) if t.starts_with("granted: ") => {
                crate::cts_sim::InquiryResponse::Granted {
                    status: t["granted: ".len()..].to_owned(),
                }
            }
            _ => crate::cts_sim::InquiryResponse::AuthenticationFailed,
        });
    let params = sim
        .node(PresentingChi)
        .params
        .clone()
        .ok_or(SimError::ParamsMissing)?;
    Ok(ScenarioResult {
        transcript: sim.transcript,
        outcome,
        captured: cheque,
        reconstructed: sim.reconstructed,
        inquiry,
        params,
    })
}

/// Loads the cheque named in `config` and runs the workflow.
pub fn run_scenario(config: ScenarioConfig) -> Result<ScenarioResult, SimError> {
    let bytes = fs::read(&config.image_path).map_err(|source| SimError::Io {
        path: config.image_path.clone(),
        source,
    })?;
    let cheque = read_pgm(&bytes)?;
    run_scenario_with_image(config, cheque)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use std::collections::BTreeSet;

    fn cheque(w: u32, h: u32, seed: u64) -> GrayImage {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        GrayImage::new(w, h, (0..w * h).map(|_| rng.gen()).collect()).unwrap()
    }

    fn config(scheme: Scheme) -> ScenarioConfig {
        ScenarioConfig::new(scheme, 99, "unused.pgm")
    }

    fn adversary(target: u8, step: u8) -> Adversary {
        Adversary {
            target: ShareIndex::new(target).unwrap(),
            offset: 3,
            step,
            xor_byte: 0x80,
        }
    }

    #[test]
    fn clean_run_accepts_and_grants_inquiry() {
        for scheme in [Scheme::Xor, Scheme::Partition] {
            let img = cheque(20, 9, 1);
            let r = run_scenario_with_image(config(scheme), img.clone()).unwrap();
            assert_eq!(r.outcome, Outcome::Accepted);
            assert_eq!(r.reconstructed.as_ref(), Some(&img));
            assert_eq!(r.mse(), Some(0.0));
            assert_eq!(
                r.inquiry,
                Some(InquiryResponse::Granted {
                    status: PROCESSED_STATUS.into()
                })
            );
            assert!(r
                .transcript
                .iter()
                .all(|m| m.kind != MessageKind::ResendRequest));
        }
    }

    #[test]
    fn steps_never_decrease_and_ids_are_sequential() {
        let r = run_scenario_with_image(config(Scheme::Partition), cheque(8, 8, 2)).unwrap();
        for (i, w) in r.transcript.windows(2).enumerate() {
            assert!(w[0].step <= w[1].step, "message {i}");
            assert_eq!(w[0].msg_id + 1, w[1].msg_id);
        }
        let steps: BTreeSet<u8> = r.transcript.iter().map(|m| m.step).collect();
        assert_eq!(steps, (1..=12).filter(|&s| s != 2).collect());
    }

    #[test]
    fn share_transfers_parse() {
        let r = run_scenario_with_image(config(Scheme::Xor), cheque(7, 5, 3)).unwrap();
        for m in r
            .transcript
            .iter()
            .filter(|m| m.kind == MessageKind::ShareTransfer)
        {
            assert!(read_share(m.payload.bytes()).is_ok());
        }
    }

    #[test]
    fn threshold_discipline() {
        let r = run_scenario_with_image(config(Scheme::Partition), cheque(6, 6, 4)).unwrap();
        let mut held: BTreeMap<Role, BTreeSet<u8>> = BTreeMap::new();
        for m in &r.transcript {
            if m.step >= 10 {
                break;
            }
            if m.kind == MessageKind::ShareTransfer && !m.to.is_dealer() {
                let idx = read_share(m.payload.bytes()).unwrap().index().get();
                held.entry(m.to).or_default().insert(idx);
            }
        }
        for (role, indices) in held {
            assert_eq!(indices.len(), 1, "{role:?} holds {indices:?}");
        }
    }

    #[test]
    fn tampered_sc3_is_rejected() {
        let cfg = config(Scheme::Partition).with_adversary(adversary(3, 9));
        let r = run_scenario_with_image(cfg, cheque(10, 10, 5)).unwrap();
        assert_eq!(r.outcome, Outcome::Rejected(ShareIndex::THREE));
        assert!(r.reconstructed.is_none());
        let resend: Vec<_> = r
            .transcript
            .iter()
            .filter(|m| m.kind == MessageKind::ResendRequest)
            .collect();
        assert_eq!(resend.len(), 1);
        assert_eq!(resend[0].to, Role::PresentingBank);
        assert!(r
            .transcript
            .iter()
            .all(|m| m.kind != MessageKind::DataTransfer || m.step < 11));
    }

    #[test]
    fn tampered_sc1_is_rejected_at_either_hop() {
        for step in [5, 7] {
            let cfg = config(Scheme::Xor).with_adversary(adversary(1, step));
            let r = run_scenario_with_image(cfg, cheque(10, 10, 6)).unwrap();
            assert_eq!(r.outcome, Outcome::Rejected(ShareIndex::ONE));
            let resend = r
                .transcript
                .iter()
                .find(|m| m.kind == MessageKind::ResendRequest)
                .unwrap();
            assert_eq!(resend.to, Role::ClearingHouse);
        }
    }

    #[test]
    fn tampered_customer_copy_fails_inquiry_only() {
        let cfg = config(Scheme::Partition).with_adversary(adversary(2, 6));
        let img = cheque(10, 10, 7);
        let r = run_scenario_with_image(cfg, img.clone()).unwrap();
        assert_eq!(r.outcome, Outcome::Accepted);
        assert_eq!(r.reconstructed, Some(img));
        assert_eq!(r.inquiry, Some(InquiryResponse::AuthenticationFailed));
    }

    #[test]
    fn transcript_is_deterministic() {
        let cfg = config(Scheme::Partition).with_adversary(adversary(3, 10));
        let a = run_scenario_with_image(cfg.clone(), cheque(12, 4, 8)).unwrap();
        let b = run_scenario_with_image(cfg.clone(), cheque(12, 4, 8)).unwrap();
        assert_eq!(a.transcript_ndjson(), b.transcript_ndjson());
        let mut other = cfg;
        other.seed += 1;
        let c = run_scenario_with_image(other, cheque(12, 4, 8)).unwrap();
        assert_ne!(a.transcript_ndjson(), c.transcript_ndjson());
    }

    #[test]
    fn transcript_line_shape() {
        let r = run_scenario_with_image(config(Scheme::Xor), cheque(2, 2, 9)).unwrap();
        let first: serde_json::Value =
            serde_json::from_str(&r.transcript[0].transcript_line()).unwrap();
        assert_eq!(first["msg_id"], 0);
        assert_eq!(first["step"], 1);
        assert_eq!(first["from"], "customer");
        assert_eq!(first["to"], "presenting_bank");
        assert_eq!(first["kind"], "submit_cheque");
        assert_eq!(first["payload_size"], 15);
        assert_eq!(first["payload_digest"].as_str().unwrap().len(), 64);
        let keys: Vec<&str> = first
            .as_object()
            .unwrap()
            .keys()
            .map(String::as_str)
            .collect();
        assert_eq!(keys.len(), 7);
    }

    #[test]
    fn bad_adversary_rejected_up_front() {
        let img = cheque(3, 1, 10);
        let wrong_step = config(Scheme::Xor).with_adversary(adversary(3, 5));
        assert!(matches!(
            run_scenario_with_image(wrong_step, img.clone()),
            Err(SimError::Tamper(_))
        ));
        let mut out_of_range = adversary(3, 9);
        out_of_range.offset = 2;
        assert!(matches!(
            run_scenario_with_image(
                config(Scheme::Xor).with_adversary(out_of_range),
                img.clone()
            ),
            Err(SimError::Tamper(_))
        ));
        let mut no_op = adversary(3, 9);
        no_op.offset = 0;
        no_op.xor_byte = 0;
        assert!(matches!(
            run_scenario_with_image(config(Scheme::Xor).with_adversary(no_op), img),
            Err(SimError::Tamper(_))
        ));
    }

    #[test]
    fn inquiry_directly() {
        let img = cheque(5, 5, 11);
        let r = run_scenario_with_image(config(Scheme::Xor), img.clone()).unwrap();
        let sc2 = crate::xor_scheme::xor_split(&img).sc2;
        assert_eq!(
            customer_inquiry(&sc2, Some(&r.params), "processed").unwrap(),
            InquiryResponse::Granted {
                status: "processed".into()
            }
        );
        let flipped = tamper_share(&sc2, 0, 0x10).unwrap();
        assert_eq!(
            customer_inquiry(&flipped, Some(&r.params), "processed").unwrap(),
            InquiryResponse::AuthenticationFailed
        );
        assert!(matches!(
            customer_inquiry(&sc2, None, "processed"),
            Err(SimError::ParamsMissing)
        ));
    }

    #[test]
    fn config_parsing() {
        let text = "# scenario\nscheme=partition\nseed=7\nimage=cheque.pgm\n\
                    adversary.target=3\nadversary.offset=10\nadversary.step=9\n";
        let cfg = ScenarioConfig::parse(text, Path::new("/data")).unwrap();
        assert_eq!(cfg.scheme, Scheme::Partition);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.image_path, PathBuf::from("/data/cheque.pgm"));
        assert_eq!(
            cfg.adversary,
            Some(Adversary {
                target: ShareIndex::THREE,
                offset: 10,
                step: 9,
                xor_byte: 0xFF
            })
        );

        let clean =
            ScenarioConfig::parse("scheme=xor\nseed=1\nimage=/abs/c.pgm\n", Path::new("/x"))
                .unwrap();
        assert_eq!(clean.adversary, None);
        assert_eq!(clean.image_path, PathBuf::from("/abs/c.pgm"));
        assert_eq!(clean.prime, Prime::default());

        for bad in [
            "scheme=xor\nseed=1\n",
            "scheme=rot13\nseed=1\nimage=a.pgm\n",
            "scheme=xor\nseed=one\nimage=a.pgm\n",
            "scheme=xor\nseed=1\nimage=a.pgm\ncolor=red\n",
            "scheme=xor\nseed=1\nseed=2\nimage=a.pgm\n",
            "scheme=xor\nseed=1\nimage=a.pgm\nprime=12\n",
            "scheme=xor\nseed=1\nimage=a.pgm\nadversary.target=3\n",
            "scheme=xor\nseed=1\nimage=a.pgm\nadversary.target=4\nadversary.offset=0\nadversary.step=9\n",
            "scheme xor\n",
        ] {
            assert!(ScenarioConfig::parse(bad, Path::new(".")).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn unreadable_image() {
        let cfg = ScenarioConfig::new(Scheme::Xor, 1, "/nonexistent/cheque.pgm");
        assert!(matches!(run_scenario(cfg), Err(SimError::Io { .. })));
    }
}
