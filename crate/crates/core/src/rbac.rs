//! Role-based access control at model level: predefined roles, allow-only
//! policies, deny-by-default authorization, trusted role switching for
//! workers, session lifetimes, and an append-only audit log.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::simkernel::SimTime;

/// Default delegated-token lifetime (one hour).
pub const DEFAULT_TOKEN_LIFETIME_SECS: u64 = 3600;
/// Default web-session lifetime (six hours).
pub const DEFAULT_SESSION_LIFETIME_SECS: u64 = 21_600;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoleKind {
    User,
    Internal,
}

/// A predefined role. Only internal roles (like the worker's task-executor
/// role) may be trusted to switch into user roles for data staging.
#[derive(Debug, Clone)]
pub struct Role {
    pub name: String,
    pub kind: RoleKind,
    pub trusted_switcher: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Action {
    Read,
    Write,
    Submit,
    Download,
}

impl Action {
    pub fn parse(s: &str) -> Option<Action> {
        match s {
            "read" => Some(Action::Read),
            "write" => Some(Action::Write),
            "submit" => Some(Action::Submit),
            "download" => Some(Action::Download),
            _ => None,
        }
    }

    pub const ALL: [Action; 4] = [Action::Read, Action::Write, Action::Submit, Action::Download];
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Read => f.write_str("read"),
            Action::Write => f.write_str("write"),
            Action::Submit => f.write_str("submit"),
            Action::Download => f.write_str("download"),
        }
    }
}

/// An allow policy: `role` may perform `actions` on resources matching
/// `resource`. There are no deny records; absence of a match denies.
#[derive(Debug, Clone)]
pub struct Policy {
    pub role: String,
    pub resource: String,
    pub actions: Vec<Action>,
}

impl Policy {
    /// Resource patterns are literal ids plus a single trailing-wildcard
    /// form like `dataset/*`.
    pub fn matches(&self, resource: &str, action: Action) -> bool {
        if !self.actions.contains(&action) {
            return false;
        }
        if let Some(prefix) = self.resource.strip_suffix('*') {
            resource.starts_with(prefix)
        } else {
            self.resource == resource
        }
    }
}

/// An authenticated principal acting under one role, with the delegated
/// token valid for one hour and the web session for six.
#[derive(Debug, Clone)]
pub struct Session {
    pub principal: String,
    pub role: String,
    pub issued_at: SimTime,
    pub token_lifetime_secs: u64,
    pub session_lifetime_secs: u64,
}

impl Session {
    pub fn new(principal: impl Into<String>, role: impl Into<String>, issued_at: SimTime) -> Self {
        Session {
            principal: principal.into(),
            role: role.into(),
            issued_at,
            token_lifetime_secs: DEFAULT_TOKEN_LIFETIME_SECS,
            session_lifetime_secs: DEFAULT_SESSION_LIFETIME_SECS,
        }
    }

    pub fn token_valid(&self, at: SimTime) -> bool {
        at.since(self.issued_at) <= self.token_lifetime_secs
    }

    pub fn session_valid(&self, at: SimTime) -> bool {
        at.since(self.issued_at) <= self.session_lifetime_secs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Allow,
    Deny,
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Decision::Allow => f.write_str("allow"),
            Decision::Deny => f.write_str("deny"),
        }
    }
}

/// One audit record per authorization-relevant call, in (time, order) sequence.
#[derive(Debug, Clone)]
pub struct AuditRecord {
    pub at: SimTime,
    pub principal: String,
    pub acting_role: String,
    pub resource: String,
    pub action: String,
    pub decision: Decision,
}

#[derive(Debug, Error)]
pub enum RbacError {
    #[error("access denied: role {role} may not {action} {resource}")]
    AccessDenied { role: String, action: Action, resource: String },
    #[error("role switch denied: {caller} is not a trusted switcher")]
    SwitchDenied { caller: String },
    #[error("unknown role {0}")]
    UnknownRole(String),
    #[error("only internal roles may be trusted switchers: {0}")]
    UntrustableRole(String),
    #[error("session for {principal} expired")]
    SessionExpired { principal: String },
}

/// A scoped handle returned by [`Rbac::assume_role`]: the worker stages data
/// under `user_role` and must drop back to its own role before execution.
#[derive(Debug, Clone)]
pub struct RoleHandle {
    pub worker_role: String,
    pub user_role: String,
}

/// The policy store plus audit log.
#[derive(Debug, Default)]
pub struct Rbac {
    roles: BTreeMap<String, Role>,
    policies: Vec<Policy>,
    audit: Vec<AuditRecord>,
}

impl Rbac {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_role(
        &mut self,
        name: &str,
        kind: RoleKind,
        trusted_switcher: bool,
    ) -> Result<(), RbacError> {
        if trusted_switcher && kind != RoleKind::Internal {
            return Err(RbacError::UntrustableRole(name.to_string()));
        }
        self.roles.insert(
            name.to_string(),
            Role { name: name.to_string(), kind, trusted_switcher },
        );
        Ok(())
    }

    pub fn add_policy(&mut self, role: &str, resource: &str, actions: Vec<Action>) {
        self.policies.push(Policy {
            role: role.to_string(),
            resource: resource.to_string(),
            actions,
        });
    }

    pub fn role(&self, name: &str) -> Option<&Role> {
        self.roles.get(name)
    }

    pub fn audit_log(&self) -> &[AuditRecord] {
        &self.audit
    }

    pub fn audit_len(&self) -> usize {
        self.audit.len()
    }

    fn record(
        &mut self,
        at: SimTime,
        principal: &str,
        role: &str,
        resource: &str,
        action: &str,
        decision: Decision,
    ) {
        self.audit.push(AuditRecord {
            at,
            principal: principal.to_string(),
            acting_role: role.to_string(),
            resource: resource.to_string(),
            action: action.to_string(),
            decision,
        });
    }

    /// Allow iff a matching allow policy exists; every call appends exactly
    /// one audit record. Unknown roles deny (with the attempt audited).
    pub fn authorize(
        &mut self,
        principal: &str,
        acting_role: &str,
        resource: &str,
        action: Action,
        at: SimTime,
    ) -> Decision {
        let decision = if self.roles.contains_key(acting_role)
            && self
                .policies
                .iter()
                .any(|p| p.role == acting_role && p.matches(resource, action))
        {
            Decision::Allow
        } else {
            Decision::Deny
        };
        self.record(at, principal, acting_role, resource, &action.to_string(), decision);
        decision
    }

    /// Same as [`authorize`](Self::authorize) but gated on session validity:
    /// an expired session always denies.
    pub fn authorize_session(
        &mut self,
        session: &Session,
        resource: &str,
        action: Action,
        at: SimTime,
    ) -> Decision {
        if !session.session_valid(at) {
            self.record(at, &session.principal, &session.role, resource, &action.to_string(), Decision::Deny);
            return Decision::Deny;
        }
        self.authorize(&session.principal, &session.role, resource, action, at)
    }

    /// A trusted internal role (task-executor) adopts `user_role` to stage
    /// that user's data. Appends exactly one audit record for the switch.
    pub fn assume_role(
        &mut self,
        principal: &str,
        worker_role: &str,
        user_role: &str,
        at: SimTime,
    ) -> Result<RoleHandle, RbacError> {
        let trusted = self.roles.get(worker_role).map(|r| r.trusted_switcher).unwrap_or(false);
        let target_exists = self.roles.contains_key(user_role);
        let decision = if trusted && target_exists { Decision::Allow } else { Decision::Deny };
        self.record(at, principal, worker_role, user_role, "assume", decision);
        if !trusted {
            return Err(RbacError::SwitchDenied { caller: worker_role.to_string() });
        }
        if !target_exists {
            return Err(RbacError::UnknownRole(user_role.to_string()));
        }
        Ok(RoleHandle { worker_role: worker_role.to_string(), user_role: user_role.to_string() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> Rbac {
        let mut r = Rbac::new();
        r.register_role("public-only", RoleKind::User, false).unwrap();
        r.register_role("read-archive-private", RoleKind::User, false).unwrap();
        r.register_role("task-executor", RoleKind::Internal, true).unwrap();
        r.register_role("web-server", RoleKind::Internal, false).unwrap();
        r.add_policy("read-archive-private", "dataset/archive/*", vec![Action::Read]);
        r.add_policy("public-only", "dataset/public/*", vec![Action::Read, Action::Download]);
        r
    }

    #[test]
    fn fresh_role_with_no_policies_denies_everything() {
        let mut r = store();
        r.register_role("newcomer", RoleKind::User, false).unwrap();
        for action in Action::ALL {
            assert_eq!(
                r.authorize("u", "newcomer", "dataset/archive/part-1", action, SimTime(0)),
                Decision::Deny
            );
        }
    }

    #[test]
    fn matching_policy_allows_read_of_private_dataset() {
        let mut r = store();
        let d = r.authorize("u", "read-archive-private", "dataset/archive/part-1", Action::Read, SimTime(5));
        assert_eq!(d, Decision::Allow);
    }

    #[test]
    fn download_of_non_downloadable_private_data_is_denied() {
        let mut r = store();
        let d = r.authorize("u", "read-archive-private", "dataset/archive/part-1", Action::Download, SimTime(5));
        assert_eq!(d, Decision::Deny);
    }

    #[test]
    fn unknown_role_denies_and_audits() {
        let mut r = store();
        assert_eq!(r.authorize("u", "ghost", "dataset/public/x", Action::Read, SimTime(0)), Decision::Deny);
        assert_eq!(r.audit_log().last().unwrap().decision, Decision::Deny);
    }

    #[test]
    fn trusted_worker_assumes_user_role_for_staging() {
        let mut r = store();
        let handle = r.assume_role("worker:i-0001", "task-executor", "read-archive-private", SimTime(10)).unwrap();
        let d = r.authorize("worker:i-0001", &handle.user_role, "dataset/archive/part-1", Action::Read, SimTime(10));
        assert_eq!(d, Decision::Allow);
    }

    #[test]
    fn user_roles_cannot_switch() {
        let mut r = store();
        let err = r.assume_role("u", "public-only", "read-archive-private", SimTime(0)).unwrap_err();
        assert!(matches!(err, RbacError::SwitchDenied { .. }));
        assert_eq!(r.audit_log().last().unwrap().decision, Decision::Deny);
    }

    #[test]
    fn privilege_dropped_after_release() {
        let mut r = store();
        let handle = r.assume_role("worker:i-0001", "task-executor", "read-archive-private", SimTime(0)).unwrap();
        drop(handle);
        // back under its own role, the worker has no read grant on the dataset
        let d = r.authorize("worker:i-0001", "task-executor", "dataset/archive/part-1", Action::Read, SimTime(1));
        assert_eq!(d, Decision::Deny);
    }

    #[test]
    fn only_internal_roles_may_be_trusted() {
        let mut r = Rbac::new();
        let err = r.register_role("sneaky", RoleKind::User, true).unwrap_err();
        assert!(matches!(err, RbacError::UntrustableRole(_)));
    }

    #[test]
    fn expired_session_always_denies() {
        let mut r = store();
        let s = Session::new("user-1", "read-archive-private", SimTime(0));
        assert_eq!(
            r.authorize_session(&s, "dataset/archive/part-1", Action::Read, SimTime(21_600)),
            Decision::Allow
        );
        assert_eq!(
            r.authorize_session(&s, "dataset/archive/part-1", Action::Read, SimTime(21_601)),
            Decision::Deny
        );
        assert!(s.token_valid(SimTime(3600)));
        assert!(!s.token_valid(SimTime(3601)));
    }

    #[test]
    fn audit_count_matches_call_count() {
        let mut r = store();
        let mut calls = 0;
        for t in 0..25u64 {
            r.authorize("u", "public-only", "dataset/public/x", Action::Read, SimTime(t));
            calls += 1;
        }
        let _ = r.assume_role("w", "task-executor", "public-only", SimTime(30));
        calls += 1;
        assert_eq!(r.audit_len(), calls);
    }

    #[test]
    fn wildcard_patterns_match_prefixes_only() {
        let mut r = store();
        r.add_policy("public-only", "queue/dev", vec![Action::Submit]);
        assert_eq!(
            r.authorize("u", "public-only", "dataset/public/a/b", Action::Read, SimTime(0)),
            Decision::Allow
        );
        assert_eq!(
            r.authorize("u", "public-only", "dataset/private/a", Action::Read, SimTime(0)),
            Decision::Deny
        );
        assert_eq!(r.authorize("u", "public-only", "queue/dev", Action::Submit, SimTime(0)), Decision::Allow);
        assert_eq!(r.authorize("u", "public-only", "queue/dev2", Action::Submit, SimTime(0)), Decision::Deny);
    }
}
