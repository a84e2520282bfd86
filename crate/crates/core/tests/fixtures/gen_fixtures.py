#!/usr/bin/env python3
"""Regenerate the MPEG-4 Part 2 parser fixtures.

Streams are encoded with libavcodec's `mpeg4` encoder (through PyAV) from
synthetic luminance sequences, then decoded again with libavcodec to export
the reference data the parser tests compare against:

  <name>.m4v        elementary stream
  <name>.json       dims, GOP sizes, P-frame count
  <name>.mvs        reference motion vectors: per P-frame, mb_cols*mb_rows
                    (dx, dy) int16 LE pairs in raster order, half-pel,
                    forward content displacement (negated codec MV),
                    4MV macroblocks collapsed to the rounded mean, intra = 0
  <name>.coef       reference luminance coefficients as logged by the decoder
                    (natural order, dequantized for inter blocks), one line
                    per P-frame macroblock: `frame mb_x mb_y qp | pos:val ...`
                    with the four luma blocks separated by `|`
  stream_a.cff      golden CFF built from the reference data

Unsupported-feature streams are written as `reject_<feature>.m4v`.

Usage: python3 gen_fixtures.py  (run from this directory)
"""
import io
import json
import re
import struct

import av
import av.logging
import numpy as np

OUT = "."


def luma_to_frame(y, pts):
    h, w = y.shape
    buf = np.full((h * 3 // 2, w), 128, dtype=np.uint8)
    buf[:h] = y
    f = av.VideoFrame.from_ndarray(buf, format="yuv420p")
    f.pts = pts
    return f


def encode(frames, codec="mpeg4", fmt="m4v", gop=6, bframes=0, q=None, options=None, flags=None):
    h, w = frames[0].shape
    buf = io.BytesIO()
    out = av.open(buf, "w", format=fmt)
    s = out.add_stream(codec, rate=30)
    s.width, s.height, s.pix_fmt = w, h, "yuv420p"
    cc = s.codec_context
    cc.gop_size = gop
    cc.max_b_frames = bframes
    cc.thread_count = 1
    opts = {"sc_threshold": "1000000000"}
    if q is not None:
        opts.update({"flags": "+qscale", "global_quality": str(q * 118)})
    if flags:
        opts["flags"] = opts.get("flags", "") + flags
    if options:
        opts.update(options)
    cc.options = opts
    for i, y in enumerate(frames):
        fr = luma_to_frame(y, i)
        for p in s.encode(fr):
            out.mux(p)
    for p in s.encode():
        out.mux(p)
    out.close()
    return buf.getvalue()


def parse_coeff_log(text):
    """Split the decoder debug log into frames of per-MB coefficient blocks."""
    frames = []
    cur = []
    token = re.compile(r"DCT coeffs of MB at (\d+)x(\d+):|New frame, type: (\w)")
    for m in token.finditer(text):
        if m.group(3):
            nxt = token.search(text, m.end())
            table = text[m.end() : nxt.start() if nxt else len(text)].split("\n")[1:]
            qp = {}
            for row in table:
                head = row.split(None, 1)
                if len(head) < 2:
                    continue
                mby = int(head[0]) // 16
                for mbx, (v, _kind) in enumerate(re.findall(r"(\d+)([^\d\s]*)", head[1])):
                    qp[(mbx, mby)] = int(v)
            frames.append((m.group(3), [(x, y, qp[(x, y)], b) for (x, y, b) in cur]))
            cur = []
            continue
        mbx, mby = int(m.group(1)), int(m.group(2))
        start = m.end()
        nxt = token.search(text, start)
        body = text[start : nxt.start() if nxt else len(text)]
        lines = [l for l in body.split("\n") if l.strip() and re.fullmatch(r"[\s\-\d]+", l)]
        blocks = [list(map(int, l.split())) for l in lines[:6]]
        assert all(len(b) == 64 for b in blocks), (mbx, mby, [len(b) for b in blocks])
        cur.append((mbx, mby, blocks))
    return frames


def reference_decode(data):
    av.logging.set_level(av.logging.DEBUG)
    av.logging.set_skip_repeated(False)
    inp = av.open(io.BytesIO(data), format="m4v")
    st = inp.streams.video[0]
    st.codec_context.thread_count = 1
    st.codec_context.options = {"flags2": "+export_mvs", "debug": "dct_coeff+qp+mb_type"}
    decoded = []
    with av.logging.Capture() as cap:
        for fr in inp.decode(st):
            sd = fr.side_data.get("MOTION_VECTORS")
            mvs = sd.to_ndarray() if sd is not None else None
            decoded.append((fr.pict_type, fr.width, fr.height, mvs))
    av.logging.set_level(None)
    text = " ".join(m for (_lvl, name, m) in cap if name == "mpeg4")
    coef = parse_coeff_log(text)
    assert len(coef) == len(decoded), (len(coef), len(decoded))
    return decoded, coef


def round_half_away(num, den):
    q = (abs(num) + den // 2) // den
    return q if num >= 0 else -q


def mv_field(mvs, w, h):
    cols, rows = (w + 15) // 16, (h + 15) // 16
    acc = {}
    for m in mvs:
        bx, by = (m["dst_x"] - m["w"] // 2) // 16, (m["dst_y"] - m["h"] // 2) // 16
        assert m["motion_scale"] == 2
        acc.setdefault((bx, by), []).append((int(m["motion_x"]), int(m["motion_y"])))
    field = np.zeros((rows, cols, 2), dtype=np.int16)
    for (bx, by), vs in acc.items():
        assert len(vs) in (1, 4), vs
        sx = sum(v[0] for v in vs)
        sy = sum(v[1] for v in vs)
        # codec MVs point at the reference; the data model stores content motion
        field[by, bx] = (-round_half_away(sx, len(vs)), -round_half_away(sy, len(vs)))
    return field


def sidecars(name, data, golden=False):
    decoded, coef = reference_decode(data)
    w, h = decoded[0][1], decoded[0][2]
    gops = []
    pfields = []
    coef_lines = []
    for idx, ((ptype, _, _, mvs), (ctype, mbs)) in enumerate(zip(decoded, coef)):
        t = ctype
        if t == "I":
            gops.append(1)
            continue
        assert t == "P", t
        gops[-1] += 1
        pfields.append(mv_field(mvs if mvs is not None else [], w, h))
        for mbx, mby, qp, blocks in mbs:
            parts = []
            for b in blocks[:4]:
                parts.append(" ".join(f"{p}:{v}" for p, v in enumerate(b) if v != 0))
            coef_lines.append(f"{idx} {mbx} {mby} {qp} | " + " | ".join(parts))
    with open(f"{OUT}/{name}.m4v", "wb") as f:
        f.write(data)
    with open(f"{OUT}/{name}.mvs", "wb") as f:
        for fld in pfields:
            f.write(fld.astype("<i2").tobytes())
    with open(f"{OUT}/{name}.coef", "w") as f:
        f.write("\n".join(coef_lines) + "\n")
    meta = {"width": w, "height": h, "gop_sizes": gops, "pframes": len(pfields)}
    with open(f"{OUT}/{name}.json", "w") as f:
        json.dump(meta, f, indent=1)
    if golden:
        write_golden_cff(name, w, h, gops, pfields, coef)
    print(name, meta, len(data), "bytes")


ZIGZAG = [
    0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5, 12, 19, 26, 33, 40, 48, 41, 34, 27, 20,
    13, 6, 7, 14, 21, 28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51, 58, 59,
    52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63,
]


def unquant_inter(v, q):
    # inverse of |rec| = q*(2|L|+1) - (1 if q even else 0)
    a = abs(v) + (1 if q % 2 == 0 else 0)
    assert (a - q) % (2 * q) == 0, (v, q)
    lvl = (a - q) // (2 * q)
    return lvl if v > 0 else -lvl


def write_golden_cff(name, w, h, gops, pfields, coef):
    """Golden CFF for a constant-quant stream without intra MBs in P-VOPs."""
    cols, rows = w // 16, h // 16
    out = bytearray(b"CFF1" + struct.pack("<HIIIH", 1, w, h, len(gops), 0))
    pf = iter(pfields)
    frames = iter(coef)
    for n in gops:
        out += struct.pack("<H", n)
        ctype, _ = next(frames)
        assert ctype == "I"
        for _ in range(n - 1):
            out += next(pf).astype("<i2").tobytes()
            ctype, mbs = next(frames)
            assert ctype == "P"
            blocks = {}
            q = mbs[0][2]
            for mbx, mby, mbq, bl in mbs:
                assert mbq == q, (mbq, q)
                for k in range(4):
                    br, bc = 2 * mby + k // 2, 2 * mbx + k % 2
                    nz = [(zi, unquant_inter(bl[k][ZIGZAG[zi]], q)) for zi in range(64) if bl[k][ZIGZAG[zi]] != 0]
                    if nz:
                        blocks[(br, bc)] = nz
            out += struct.pack("<HI", q, len(blocks))
            for (br, bc) in sorted(blocks):
                nz = blocks[(br, bc)]
                out += struct.pack("<HHB", br, bc, len(nz))
                for zi, v in nz:
                    out += struct.pack("<Bh", zi, v)
    with open(f"{OUT}/{name}.cff", "wb") as f:
        f.write(bytes(out))


def texture(rng, h, w, smooth=True):
    t = rng.integers(0, 256, (h, w)).astype(np.float64)
    if smooth:
        t = (t + np.roll(t, 1, 0) + np.roll(t, 1, 1) + np.roll(np.roll(t, 1, 0), 1, 1)) / 4
    return t


def static_scene(rng, w, h, n):
    bg = texture(rng, h, w)
    return [np.clip(bg + rng.normal(0, 2.0, bg.shape), 0, 255).astype(np.uint8) for _ in range(n)]


def moving_object(rng, w, h, n, size, start, vel, bg_noise=0.0):
    bg = texture(rng, h, w)
    obj = texture(rng, size[1], size[0], smooth=False)
    frames = []
    for i in range(n):
        img = bg.copy()
        x0 = int(round(start[0] + vel[0] * i))
        y0 = int(round(start[1] + vel[1] * i))
        xa, ya = max(x0, 0), max(y0, 0)
        xb, yb = min(x0 + size[0], w), min(y0 + size[1], h)
        if xb > xa and yb > ya:
            img[ya:yb, xa:xb] = obj[ya - y0 : yb - y0, xa - x0 : xb - x0]
        if bg_noise:
            img = img + rng.normal(0, bg_noise, img.shape)
        frames.append(np.clip(img, 0, 255).astype(np.uint8))
    return frames


def panning(rng, w, h, n, vel, cut_at=None):
    canvas = texture(rng, h + 64, w + 256)
    other = texture(rng, h, w, smooth=False)
    frames = []
    for i in range(n):
        ox = 8 + int(vel[0] * i) % 200
        oy = 8 + (int(vel[1] * i) % 40)
        img = canvas[oy : oy + h, ox : ox + w].copy()
        if cut_at is not None and i % 6 >= cut_at:
            # partial scene change inside the GOP forces intra macroblocks
            img[: h // 2, : w // 2] = other[: h // 2, : w // 2]
        frames.append(np.clip(img, 0, 255).astype(np.uint8))
    return frames


def main():
    rng = np.random.default_rng(20240611)

    # A: static scene, 64x64, one GOP of 1 I + 5 P, constant quantiser
    a = static_scene(rng, 64, 64, 6)
    sidecars("stream_a", encode(a, q=4), golden=True)

    # B: textured object translating over a static background, two GOPs
    b = moving_object(rng, 128, 96, 12, (32, 32), (20, 30), (3, -1))
    sidecars("stream_b", encode(b, q=5))

    # C: panning with fast motion (fcode > 1), 4MV, resync markers, rate
    # control (dquant), and a partial scene change that produces intra MBs
    c = panning(rng, 176, 144, 18, (11, 3), cut_at=3)
    sidecars(
        "stream_c",
        encode(c, flags="+mv4", options={"ps": "180", "b": "300k", "mbd": "rd", "trellis": "0"}),
    )

    # D: odd geometry (not a multiple of 16) and slower object, one GOP of 8
    d = moving_object(rng, 72, 56, 8, (24, 16), (10, 12), (-2, 2), bg_noise=1.5)
    sidecars("stream_d", encode(d, gop=8, q=7, flags="+mv4"))

    # unsupported-feature rejections
    r = moving_object(rng, 64, 64, 6, (16, 16), (8, 8), (2, 1))
    rejects = {
        "interlaced": dict(flags="+ildct"),
        "b_vop": dict(bframes=2),
        "data_partitioning": dict(options={"data_partitioning": "1"}),
        "quarter_sample": dict(flags="+qpel"),
        "mpeg_quant": dict(options={"mpeg_quant": "1"}),
    }
    for feat, kw in rejects.items():
        with open(f"{OUT}/reject_{feat}.m4v", "wb") as f:
            f.write(encode(r, **kw))
    with open(f"{OUT}/reject_short_header.m4v", "wb") as f:
        sq = moving_object(rng, 128, 96, 6, (16, 16), (8, 8), (2, 1))
        f.write(encode(sq, codec="h263", fmt="h263"))
    print("rejects:", sorted(rejects) + ["short_header"])


if __name__ == "__main__":
    main()
