"""Permissioned identity registry with role-based access control.

Four fixed roles exist. Validators order and validate blocks, devices and
gateways submit transactions, and admins register members. Every role may
query. Credentials are static per-member secrets; the default signature
scheme is HMAC-SHA256 keyed by that secret.
"""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Protocol


class Role(str, Enum):
    DEVICE = "device"
    GATEWAY = "gateway"
    VALIDATOR = "validator"
    ADMIN = "admin"


class Action(str, Enum):
    SUBMIT_TX = "submit_tx"
    PROPOSE_BLOCK = "propose_block"
    VALIDATE_BLOCK = "validate_block"
    REGISTER_MEMBER = "register_member"
    QUERY = "query"


ACL: dict[Role, frozenset[Action]] = {
    Role.DEVICE: frozenset({Action.SUBMIT_TX, Action.QUERY}),
    Role.GATEWAY: frozenset({Action.SUBMIT_TX, Action.QUERY}),
    Role.VALIDATOR: frozenset({Action.PROPOSE_BLOCK, Action.VALIDATE_BLOCK, Action.QUERY}),
    Role.ADMIN: frozenset({Action.REGISTER_MEMBER, Action.QUERY}),
}


class MembershipError(Exception):
    pass


class DuplicateId(MembershipError):
    pass


class Unauthorized(MembershipError):
    pass


class UnknownMember(MembershipError):
    pass


class BadCredential(MembershipError):
    pass


class SignatureScheme(Protocol):
    """Signs and verifies canonical payloads with a member's credential."""

    def sign(self, credential: bytes, payload: bytes) -> bytes: ...

    def verify(self, credential: bytes, payload: bytes, signature: bytes) -> bool: ...


class HmacScheme:
    """Keyed-digest test scheme: deterministic, no key infrastructure."""

    def sign(self, credential: bytes, payload: bytes) -> bytes:
        return hmac.new(credential, payload, hashlib.sha256).digest()

    def verify(self, credential: bytes, payload: bytes, signature: bytes) -> bool:
        return hmac.compare_digest(self.sign(credential, payload), signature)


_AUTH_CONTEXT = b"securiot-auth\x00"


def make_proof(credential: bytes, challenge: bytes = b"") -> bytes:
    """Proof of possession of ``credential`` for ``authenticate``."""
    return hmac.new(credential, _AUTH_CONTEXT + challenge, hashlib.sha256).digest()


def derive_credential(seed: int | str, member_id: str) -> bytes:
    """Deterministic per-member secret for simulations."""
    return hashlib.sha256(f"securiot-credential:{seed}:{member_id}".encode()).digest()


@dataclass(frozen=True)
class MemberIdentity:
    member_id: str
    role: Role
    credential: bytes = field(repr=False)


@dataclass(frozen=True)
class Principal:
    """An authenticated member."""

    member_id: str
    role: Role


def authorize(principal: Principal | MemberIdentity, action: Action | str) -> bool:
    return Action(action) in ACL[Role(principal.role)]


class MembershipRegistry:
    def __init__(self, scheme: SignatureScheme | None = None) -> None:
        self.members: dict[str, MemberIdentity] = {}
        self.scheme = scheme or HmacScheme()

    @property
    def acl(self) -> dict[Role, frozenset[Action]]:
        return ACL

    @classmethod
    def bootstrap(cls, admin_id: str, credential: bytes,
                  scheme: SignatureScheme | None = None) -> MembershipRegistry:
        """Create a registry whose first member is an admin."""
        reg = cls(scheme)
        reg.members[admin_id] = MemberIdentity(admin_id, Role.ADMIN, bytes(credential))
        return reg

    def register_member(self, caller: Principal, member_id: str, role: Role | str,
                        credential: bytes) -> MemberIdentity:
        if not authorize(caller, Action.REGISTER_MEMBER):
            raise Unauthorized(f"{caller.member_id} ({caller.role.value}) may not register members")
        if caller.member_id not in self.members:
            raise Unauthorized(f"{caller.member_id} is not a registered member")
        if member_id in self.members:
            raise DuplicateId(member_id)
        ident = MemberIdentity(member_id, Role(role), bytes(credential))
        self.members[member_id] = ident
        return ident

    def authenticate(self, member_id: str, proof: bytes, challenge: bytes = b"") -> Principal:
        ident = self.members.get(member_id)
        if ident is None:
            raise UnknownMember(member_id)
        if not hmac.compare_digest(make_proof(ident.credential, challenge), proof):
            raise BadCredential(member_id)
        return Principal(ident.member_id, ident.role)

    def principal(self, member_id: str) -> Principal:
        """Principal for an already-authenticated member (by signature)."""
        ident = self.members.get(member_id)
        if ident is None:
            raise UnknownMember(member_id)
        return Principal(ident.member_id, ident.role)

    def role_of(self, member_id: str) -> Role | None:
        ident = self.members.get(member_id)
        return None if ident is None else ident.role

    def sign(self, member_id: str, payload: bytes) -> bytes:
        return self.scheme.sign(self.members[member_id].credential, payload)

    def verify(self, member_id: str, payload: bytes, signature: bytes) -> bool:
        ident = self.members.get(member_id)
        if ident is None:
            return False
        return self.scheme.verify(ident.credential, payload, signature)

    def ids_with_role(self, role: Role | str) -> list[str]:
        role = Role(role)
        return sorted(m for m, ident in self.members.items() if ident.role is role)

    # -- bootstrap file: "id,role,credential_hex" per line, '#' comments

    def dumps(self) -> str:
        lines = [f"{m.member_id},{m.role.value},{m.credential.hex()}"
                 for m in sorted(self.members.values(), key=lambda m: m.member_id)]
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def loads(cls, text: str, scheme: SignatureScheme | None = None) -> MembershipRegistry:
        reg = cls(scheme)
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 3:
                raise MembershipError(f"line {lineno}: expected 'id,role,credential_hex'")
            member_id, role, cred = parts
            try:
                ident = MemberIdentity(member_id, Role(role), bytes.fromhex(cred))
            except ValueError as exc:
                raise MembershipError(f"line {lineno}: {exc}") from None
            if member_id in reg.members:
                raise DuplicateId(f"line {lineno}: {member_id}")
            reg.members[member_id] = ident
        return reg

    @classmethod
    def load(cls, path: str | Path, scheme: SignatureScheme | None = None) -> MembershipRegistry:
        return cls.loads(Path(path).read_text(encoding="utf-8"), scheme)

    @classmethod
    def from_members(cls, members: Iterable[tuple[str, Role | str, bytes]],
                     scheme: SignatureScheme | None = None) -> MembershipRegistry:
        reg = cls(scheme)
        for member_id, role, cred in members:
            if member_id in reg.members:
                raise DuplicateId(member_id)
            reg.members[member_id] = MemberIdentity(member_id, Role(role), bytes(cred))
        return reg
