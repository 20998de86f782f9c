def box_iou(a, b):
    ix = min(a[2], b[2]) - max(a[0], b[0])
    iy = min(a[3], b[3]) - max(a[1], b[1])
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / ((a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter)


def coords(item):
    """Plain [x1, y1, x2, y2] from a box-like object or sequence."""
    box = getattr(item, "box", item)
    if hasattr(box, "x1"):
        return [box.x1, box.y1, box.x2, box.y2]
    return [float(v) for v in box]
