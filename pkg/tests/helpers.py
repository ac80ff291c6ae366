"""Record builders and brute-force oracles shared by the tests."""

from cogent_sim.policies import CacheEntry
from cogent_sim.trace import Modality, ParamSet, RequestRecord


def block(ts, key, off, length, cid=None, **kw):
    return RequestRecord(
        timestamp=ts,
        key=key,
        params=ParamSet.of(off=off, len=length),
        size=length,
        content_id=cid or key.split("/")[0],
        modality=Modality.BLOCK,
        format="raw",
        **kw,
    )


def image(ts, cid, fmt="jpeg", w=640, h=360, size=4096, code=None, key=None, **kw):
    return RequestRecord(
        timestamp=ts,
        key=key or f"{cid}/img",
        params=ParamSet.of(w=w, h=h, fmt=fmt),
        size=size,
        content_id=cid,
        modality=Modality.IMAGE,
        format=fmt,
        simhash=code,
        **kw,
    )


def plain(ts, key, size=100, cid=None, **kw):
    return RequestRecord(ts, key, ParamSet(), size, cid or key, **kw)


def entry(rec, now=0, fetch=0):
    return CacheEntry.from_record(rec, now, fetch)
