"""Line-by-line transcription of the Embedding-Guided NMS loop, using plain lists."""

import math

from ._boxes import box_iou, coords

MAX_DETECTIONS = 50


def oracle_eg_nms(boxes, scores, embeddings, sigma=0.5, delta=0.3):
    """
    Returns:
        (D, S): input indices in pick order and the corresponding scores
    """
    if len(boxes) > MAX_DETECTIONS:
        raise ValueError(f"oracle accepts at most {MAX_DETECTIONS} detections")
    B = [(k, coords(b)) for k, b in enumerate(boxes)]
    S = [float(s) for s in scores]
    E = [float(e) for e in embeddings]
    D_out, S_out = [], []
    while B:
        # sort by score, descending; sorted() is stable so ties keep input order
        ranked = sorted(range(len(B)), key=lambda q: -S[q])
        B = [B[q] for q in ranked]
        S = [S[q] for q in ranked]
        E = [E[q] for q in ranked]
        b_max, s_max, e_max = B[0], S[0], E[0]
        D_out.append(b_max[0])
        S_out.append(s_max)
        B, S, E = B[1:], S[1:], E[1:]
        for i in range(len(B)):
            d = abs(e_max - E[i])
            sig = 1.0 / (1.0 + math.exp(-2.0 * (d - delta)))
            S[i] = S[i] * math.exp(-(box_iou(b_max[1], B[i][1]) ** (1.5 + sig)) / sigma)
    return D_out, S_out
