#!/usr/bin/env python3
"""Rewrite an OpenCV "new-style" HAAR cascade XML into the legacy layout.

The legacy layout is the one read by `facerec_core::haar::parse_cascade`:

    <opencv_storage>
    <NAME type_id="opencv-haar-classifier">
      <size>W H</size>
      <stages>
        <_>
          <trees>
            <_>                         (one tree)
              <_>                       (one node)
                <feature><rects><_>x y w h weight</_>...</rects>
                  <tilted>0</tilted></feature>
                <threshold>t</threshold>
                <left_val>v</left_val> | <left_node>i</left_node>
                <right_val>v</right_val> | <right_node>i</right_node></_>
            </_>
          </trees>
          <stage_threshold>t</stage_threshold>
          <parent>i-1</parent>
          <next>-1</next></_>
      </stages>
    </NAME>
    </opencv_storage>

Numeric strings are copied verbatim, so the conversion is lossless.

Usage: cascade_to_legacy.py INPUT.xml OUTPUT.xml [ROOT_NAME]
"""

import os
import sys
import xml.etree.ElementTree as ET


def convert(src, dst, root_name):
    cascade = ET.parse(src).getroot().find("cascade")
    if cascade.findtext("featureType").strip() != "HAAR":
        raise SystemExit("only HAAR cascades can be converted")
    width = cascade.findtext("width").strip()
    height = cascade.findtext("height").strip()

    features = []
    for feat in cascade.find("features"):
        rects = [r.text.strip() for r in feat.find("rects")]
        tilted = (feat.findtext("tilted") or "0").strip()
        features.append((rects, tilted))

    raw = open(src).read()
    start, end = raw.find("<!--"), raw.find("-->")
    header = [raw[start:end + 3]] if 0 <= start < end else []

    out = ['<?xml version="1.0"?>'] + header + ["<opencv_storage>",
           f'<{root_name} type_id="opencv-haar-classifier">',
           f"  <size>{width} {height}</size>", "  <stages>"]
    for si, stage in enumerate(cascade.find("stages")):
        out.append("    <_>")
        out.append(f"      <!-- stage {si} -->")
        out.append("      <trees>")
        for wc in stage.find("weakClassifiers"):
            nodes = wc.findtext("internalNodes").split()
            leaves = wc.findtext("leafValues").split()
            out.append("        <_>")
            for ni in range(len(nodes) // 4):
                left, right, fidx, thr = nodes[4 * ni:4 * ni + 4]
                rects, tilted = features[int(fidx)]
                out.append("          <_>")
                out.append("            <feature>")
                out.append("              <rects>")
                for r in rects:
                    out.append(f"                <_>{r}</_>")
                out.append("              </rects>")
                out.append(f"              <tilted>{tilted}</tilted></feature>")
                out.append(f"            <threshold>{thr}</threshold>")
                for side, child in (("left", left), ("right", right)):
                    c = int(child)
                    if c > 0:
                        out.append(f"            <{side}_node>{c}</{side}_node>")
                    else:
                        out.append(f"            <{side}_val>{leaves[-c]}</{side}_val>")
                out.append("          </_>")
            out.append("        </_>")
        out.append("      </trees>")
        out.append(f"      <stage_threshold>{stage.findtext('stageThreshold').strip()}</stage_threshold>")
        out.append(f"      <parent>{si - 1}</parent>")
        out.append("      <next>-1</next></_>")
    out += ["  </stages>", f"</{root_name}>", "</opencv_storage>", ""]
    with open(dst, "w", newline="\n") as fh:
        fh.write("\n".join(out))


if __name__ == "__main__":
    if len(sys.argv) < 3:
        raise SystemExit(__doc__)
    name = sys.argv[3] if len(sys.argv) > 3 else os.path.splitext(os.path.basename(sys.argv[2]))[0]
    convert(sys.argv[1], sys.argv[2], name)
