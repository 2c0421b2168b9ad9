//! Phone-verified registration and bearer sessions.
//!
//! Codes and session tokens are stored only as SHA-256 digests. The plain code
//! leaves the service through the SMS provider and nowhere else.

use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geo::Coordinate;
use crate::ids::{ChallengeId, UserId};
use crate::model::{LocationFix, Phone, Role, UserAccount};
use crate::service::{Principal, Service};
use crate::store::{Entity, Expect, Filter, IndexFields, Kind, Page, StoreError, StoreExt};
use crate::time::Timestamp;

const DISPLAY_NAME_MAX: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationChallenge {
    pub id: ChallengeId,
    pub phone: Phone,
    pub code_digest: String,
    pub issued_at: Timestamp,
    pub expires_at: Timestamp,
    pub attempts_left: u8,
    pub consumed: bool,
}

impl Entity for VerificationChallenge {
    const KIND: Kind = Kind::Challenge;

    fn entity_id(&self) -> String {
        self.id.to_string()
    }

    fn index_fields(&self) -> IndexFields {
        IndexFields { created_at: self.issued_at, status: None, owner: Some(self.phone.to_string()) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    /// Digest of the bearer token; the token itself is never stored.
    pub token_digest: String,
    pub user_id: UserId,
    pub role: Role,
    pub issued_at: Timestamp,
    pub expires_at: Timestamp,
}

impl Entity for Session {
    const KIND: Kind = Kind::Session;

    fn entity_id(&self) -> String {
        self.token_digest.clone()
    }

    fn index_fields(&self) -> IndexFields {
        IndexFields { created_at: self.issued_at, status: None, owner: Some(self.user_id.to_string()) }
    }
}

/// What a client gets back after verifying: the bearer token and who it is.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionGrant {
    pub token: String,
    pub user_id: UserId,
    pub role: Role,
    pub expires_at: Timestamp,
}

fn digest(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    hex::encode(h.finalize())
}

fn code_digest(challenge: &ChallengeId, code: &str) -> String {
    digest(&["otp", challenge.as_str(), code])
}

fn token_digest(token: &str) -> String {
    digest(&["session", token])
}

fn clean_display_name(raw: &str) -> Result<String> {
    let name = raw.trim();
    let len = name.chars().count();
    if len == 0 || len > DISPLAY_NAME_MAX {
        return Err(Error::BadRequest(format!("display_name must be 1..={DISPLAY_NAME_MAX} characters")));
    }
    Ok(name.to_owned())
}

/// Seed data for administratively created accounts.
#[derive(Debug, Clone)]
pub struct ProvisionedUser {
    pub phone: Phone,
    pub display_name: String,
    pub role: Role,
    pub verified: bool,
    pub push_token: Option<String>,
    pub location: Option<Coordinate>,
}

impl Service {
    fn account_by_phone(&self, phone: &Phone) -> Result<Option<(UserAccount, u64)>> {
        let recs = self.store.list(Kind::User, &Filter::owner(phone.as_str()), Page::new(0, 1))?;
        match recs.first() {
            Some(r) => Ok(Some((r.decode()?, r.version))),
            None => Ok(None),
        }
    }

    /// Starts phone verification. The code goes out by SMS only.
    pub fn begin_registration(&self, phone: &str) -> Result<ChallengeId> {
        let phone = Phone::parse(phone).map_err(|_| Error::InvalidPhone)?;
        let cfg = &self.config.verification;
        let _guard = self.registration.lock();
        let now = self.now();
        let window = Filter::owner(phone.as_str()).between(now.minus(Duration::from_secs(3600)), Timestamp(i64::MAX));
        let recent = self.store.counts(&[(Kind::Challenge, window)])?[0];
        if recent >= cfg.max_challenges_per_hour {
            return Err(Error::RateLimited);
        }

        let id = ChallengeId::generate();
        let code: u32 = rand::rng().random_range(0..10u32.pow(cfg.code_digits));
        let code = format!("{code:0width$}", width = cfg.code_digits as usize);
        let challenge = VerificationChallenge {
            code_digest: code_digest(&id, &code),
            id: id.clone(),
            phone: phone.clone(),
            issued_at: now,
            expires_at: now.plus(cfg.validity()),
            attempts_left: cfg.max_attempts,
            consumed: false,
        };
        self.store.put(&challenge, Expect::Absent)?;
        let text = format!("Your e112 verification code is {code}. It expires in {} minutes.", cfg.validity_secs / 60);
        match self.providers.sms.sms_send(&phone, &text) {
            crate::providers::Dispatch::Accepted => Ok(id),
            crate::providers::Dispatch::Failed(reason) => Err(Error::SmsFailed(reason.to_string())),
        }
    }

    /// Checks the code and, on a match, creates or re-verifies the account
    /// for the challenge's phone and opens a session.
    pub fn complete_registration(&self, challenge: &ChallengeId, code: &str, display_name: &str) -> Result<SessionGrant> {
        let name = display_name.trim();
        let now = self.now();
        let phone = loop {
            let current = match self.store.load::<VerificationChallenge>(challenge.as_str()) {
                Ok(c) => c,
                Err(StoreError::NotFound { .. }) => return Err(Error::UnknownChallenge),
                Err(e) => return Err(e.into()),
            };
            let mut ch = current.value;
            if ch.attempts_left == 0 {
                return Err(Error::AttemptsExhausted);
            }
            if ch.consumed || now >= ch.expires_at {
                return Err(Error::ChallengeExpired);
            }
            let matches = code_digest(&ch.id, code.trim()) == ch.code_digest;
            if matches {
                ch.consumed = true;
            } else {
                ch.attempts_left -= 1;
            }
            match self.store.put(&ch, Expect::Version(current.version)) {
                Ok(_) => {}
                Err(StoreError::Conflict { .. }) => continue,
                Err(e) => return Err(e.into()),
            }
            if !matches {
                return Err(if ch.attempts_left == 0 {
                    Error::AttemptsExhausted
                } else {
                    Error::CodeMismatch { attempts_left: ch.attempts_left }
                });
            }
            break ch.phone;
        };

        let _guard = self.registration.lock();
        let account = match self.account_by_phone(&phone)? {
            Some((mut acct, version)) => {
                acct.verified = true;
                if !name.is_empty() {
                    acct.display_name = clean_display_name(name)?;
                }
                self.store.put(&acct, Expect::Version(version))?;
                if let Some(fix) = acct.last_location {
                    self.index.write().upsert(acct.id.clone(), fix.coordinate, fix.at).ok();
                }
                acct
            }
            None => {
                let acct = UserAccount {
                    id: UserId::generate(),
                    phone,
                    verified: true,
                    display_name: clean_display_name(name)?,
                    role: Role::Citizen,
                    push_token: None,
                    last_location: None,
                    created_at: now,
                };
                self.store.put(&acct, Expect::Absent)?;
                acct
            }
        };
        self.open_session(&account)
    }

    fn open_session(&self, account: &UserAccount) -> Result<SessionGrant> {
        let mut raw = [0u8; 32];
        rand::rng().fill(&mut raw);
        let token = hex::encode(raw);
        let now = self.now();
        let ttl = match account.role {
            Role::Citizen => self.config.sessions.citizen_ttl_secs,
            Role::Operator => self.config.sessions.operator_ttl_secs,
        };
        let session = Session {
            token_digest: token_digest(&token),
            user_id: account.id.clone(),
            role: account.role,
            issued_at: now,
            expires_at: now.plus(Duration::from_secs(ttl)),
        };
        self.store.put(&session, Expect::Absent)?;
        Ok(SessionGrant { token, user_id: account.id.clone(), role: account.role, expires_at: session.expires_at })
    }

    pub fn authenticate(&self, token: &str) -> Result<Principal> {
        let session = match self.store.load::<Session>(&token_digest(token)) {
            Ok(s) => s.value,
            Err(StoreError::NotFound { .. }) => return Err(Error::Unauthenticated),
            Err(e) => return Err(e.into()),
        };
        if self.now() >= session.expires_at {
            return Err(Error::Unauthenticated);
        }
        Ok(Principal { user_id: session.user_id, role: session.role })
    }

    /// Administrative account creation. Operators only ever come from here.
    pub fn provision_user(&self, seed: ProvisionedUser) -> Result<UserId> {
        let _guard = self.registration.lock();
        let now = self.now();
        let (mut acct, expect) = match self.account_by_phone(&seed.phone)? {
            Some((acct, v)) => (acct, Expect::Version(v)),
            None => (
                UserAccount {
                    id: UserId::generate(),
                    phone: seed.phone.clone(),
                    verified: false,
                    display_name: String::new(),
                    role: seed.role,
                    push_token: None,
                    last_location: None,
                    created_at: now,
                },
                Expect::Absent,
            ),
        };
        acct.display_name = clean_display_name(&seed.display_name)?;
        acct.role = seed.role;
        acct.verified = acct.verified || seed.verified;
        if seed.push_token.is_some() {
            acct.push_token = seed.push_token;
        }
        if let Some(p) = seed.location {
            acct.last_location = Some(LocationFix { coordinate: p, at: now });
        }
        self.store.put(&acct, expect)?;
        let mut index = self.index.write();
        match (acct.verified, acct.last_location) {
            (true, Some(fix)) => {
                index.upsert(acct.id.clone(), fix.coordinate, fix.at).ok();
            }
            _ => {
                index.remove(&acct.id);
            }
        }
        Ok(acct.id)
    }

    /// Opens a session for an administratively provisioned, verified account
    /// without an SMS round trip. Intended for tooling and tests.
    pub fn issue_session(&self, user: &UserId) -> Result<SessionGrant> {
        let acct = self.user(user)?;
        if !acct.verified {
            return Err(Error::Unauthenticated);
        }
        self.open_session(&acct)
    }

    pub fn set_push_token(&self, who: &Principal, token: Option<String>) -> Result<()> {
        loop {
            let current = self.store.load::<UserAccount>(who.user_id.as_str())?;
            let mut acct = current.value;
            acct.push_token = token.clone().filter(|t| !t.is_empty());
            match self.store.put(&acct, Expect::Version(current.version)) {
                Ok(_) => return Ok(()),
                Err(StoreError::Conflict { .. }) => continue,
                Err(e) => return Err(e.into()),
            }
        }
    }
}
