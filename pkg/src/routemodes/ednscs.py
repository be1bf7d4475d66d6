"""Catchment discovery through DNS lookups carrying a client subnet.

A resolver that honors the client-subnet option answers as if the query
came from the given prefix, so one observer can map front-end assignment
for arbitrary networks.  Queries are plain UDP DNS with an OPT record
holding the subnet option; no resolver library is required.

Lookups are best effort: failures become error/unknown labels, never
exceptions, so a scan over many prefixes always completes.  Only clearly
bad configuration (an unparseable prefix, a too-long prefix) fails fast.
"""

from __future__ import annotations

import ipaddress
import math
import socket
import struct
from concurrent.futures import ThreadPoolExecutor
from typing import Iterable, Sequence

from .core import ERROR, OTHER, UNKNOWN, CatchmentLabel, Snapshot, site
from .ingest import NsidRule, map_nsid

__all__ = ["edns_cs_lookup", "edns_cs_scan", "build_query", "parse_response"]

QTYPE_A = 1
QTYPE_CNAME = 5
QTYPE_OPT = 41
RCODE_NOERROR = 0
ECS_OPTION_CODE = 8
UDP_PAYLOAD_SIZE = 1232
MAX_PREFIX_LEN = 24


def _encode_name(name: str) -> bytes:
    out = bytearray()
    for label in name.rstrip(".").split("."):
        raw = label.encode("ascii")
        if not 0 < len(raw) < 64:
            raise ValueError(f"bad hostname label {label!r}")
        out.append(len(raw))
        out += raw
    out.append(0)
    return bytes(out)


def _check_prefix(client_prefix: str) -> ipaddress.IPv4Network:
    try:
        network = ipaddress.ip_network(client_prefix, strict=True)
    except ValueError as exc:
        raise ValueError(f"bad client prefix {client_prefix!r}: {exc}") from None
    if network.version != 4:
        raise ValueError(f"client prefix must be IPv4, got {client_prefix!r}")
    if network.prefixlen > MAX_PREFIX_LEN:
        raise ValueError(
            f"client prefix length {network.prefixlen} exceeds {MAX_PREFIX_LEN}"
        )
    return network


def build_query(hostname: str, client_prefix: str, qid: int) -> bytes:
    """Standard A query with the client-subnet option attached."""
    network = _check_prefix(client_prefix)
    addr_len = math.ceil(network.prefixlen / 8)
    option = struct.pack(">HHHBB", ECS_OPTION_CODE, 4 + addr_len, 1, network.prefixlen, 0)
    option += network.network_address.packed[:addr_len]
    header = struct.pack(">HHHHHH", qid, 0x0100, 1, 0, 0, 1)
    question = _encode_name(hostname) + struct.pack(">HH", QTYPE_A, 1)
    opt_rr = b"\x00" + struct.pack(">HHIH", QTYPE_OPT, UDP_PAYLOAD_SIZE, 0, len(option)) + option
    return header + question + opt_rr


def _decode_name(data: bytes, offset: int) -> tuple[str, int]:
    labels = []
    jumps = 0
    end = None
    while True:
        if offset >= len(data):
            raise ValueError("truncated name")
        length = data[offset]
        if length & 0xC0 == 0xC0:
            if offset + 1 >= len(data):
                raise ValueError("truncated compression pointer")
            pointer = ((length & 0x3F) << 8) | data[offset + 1]
            if end is None:
                end = offset + 2
            offset = pointer
            jumps += 1
            if jumps > 32:
                raise ValueError("compression loop")
            continue
        offset += 1
        if length == 0:
            break
        labels.append(data[offset : offset + length].decode("ascii", "replace"))
        offset += length
    return ".".join(labels), end if end is not None else offset


def parse_response(data: bytes) -> tuple[int, int, list[tuple[str, int, str]]]:
    """Decode ``(qid, rcode, answers)``; answers are (name, type, text rdata)."""
    if len(data) < 12:
        raise ValueError("short DNS message")
    qid, flags, qdcount, ancount, _, _ = struct.unpack(">HHHHHH", data[:12])
    rcode = flags & 0xF
    offset = 12
    for _ in range(qdcount):
        _, offset = _decode_name(data, offset)
        offset += 4
    answers = []
    for _ in range(ancount):
        name, offset = _decode_name(data, offset)
        rtype, _, _, rdlen = struct.unpack(">HHIH", data[offset : offset + 10])
        offset += 10
        rdata = data[offset : offset + rdlen]
        if len(rdata) != rdlen:
            raise ValueError("truncated rdata")
        offset += rdlen
        if rtype == QTYPE_A and rdlen == 4:
            answers.append((name, rtype, str(ipaddress.IPv4Address(rdata))))
        elif rtype == QTYPE_CNAME:
            target, _ = _decode_name(data, offset - rdlen)
            answers.append((name, rtype, target))
    return qid, rcode, answers


def _label_from_answers(answers: Sequence[tuple[str, int, str]], rules) -> CatchmentLabel:
    addresses = sorted(
        (rdata for _, rtype, rdata in answers if rtype == QTYPE_A),
        key=lambda a: ipaddress.IPv4Address(a),
    )
    if addresses:
        return site(",".join(addresses))
    if rules:
        for _, rtype, rdata in answers:
            if rtype == QTYPE_CNAME:
                mapped = map_nsid(rdata, rules)
                if mapped.is_site:
                    return mapped
    return OTHER


def edns_cs_lookup(
    hostname: str,
    client_prefix: str,
    resolver: str,
    timeout: float = 3.0,
    rules: Sequence[NsidRule] | None = None,
    port: int = 53,
) -> CatchmentLabel:
    """Catchment label the resolver assigns to ``client_prefix``.

    The answer set is canonicalized by sorting the answer addresses and
    joining them, so "same front-end set" means "same catchment"; when the
    answer is only CNAMEs, rules may map the targets to sites instead.
    A timeout is unknown; a server failure or refusal is the error state.
    """
    query = build_query(hostname, client_prefix, qid=_qid_for(client_prefix))
    try:
        with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as sock:
            sock.settimeout(timeout)
            sock.sendto(query, (resolver, port))
            data, _ = sock.recvfrom(4096)
    except socket.timeout:
        return UNKNOWN
    except OSError:
        return ERROR
    try:
        qid, rcode, answers = parse_response(data)
    except ValueError:
        return ERROR
    if qid != query[0] << 8 | query[1]:
        return ERROR
    if rcode != RCODE_NOERROR:
        return ERROR
    return _label_from_answers(answers, rules)


def _qid_for(client_prefix: str) -> int:
    return hash(client_prefix) & 0xFFFF


def edns_cs_scan(
    hostname: str,
    prefixes: Iterable[str],
    resolver: str,
    time: int,
    timeout: float = 3.0,
    concurrency: int = 16,
    rules: Sequence[NsidRule] | None = None,
    port: int = 53,
) -> Snapshot:
    """Look up many prefixes concurrently and collect one snapshot."""
    prefixes = list(prefixes)
    for prefix in prefixes:
        _check_prefix(prefix)
    if concurrency < 1:
        raise ValueError("concurrency must be >= 1")

    def one(prefix: str) -> tuple[str, CatchmentLabel]:
        return prefix, edns_cs_lookup(hostname, prefix, resolver, timeout, rules, port)

    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        entries = dict(pool.map(one, prefixes))
    return Snapshot(time, entries)
