"""Session-based HTTP API for the interactive annotation tool.

The server is the single source of truth: every state payload carries the 3D
joints, the per-bone spherical coordinates, and the 2D projection computed
server-side. JSON floats use Python's shortest round-trip formatting, so a
client parsing the payload recovers bit-identical doubles.
"""

from __future__ import annotations

import json
import mimetypes
import os
import re
import threading
import uuid
from collections import deque
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from . import camera, datastore, skeleton
from .evolve import mutate_global

DEFAULT_TRANSLATION = (0.0, 0.0, 5000.0)
HISTORY_LIMIT = 256


class ServiceError(Exception):
    status = 400


class SessionNotFound(ServiceError):
    status = 404


class EditRejected(ServiceError):
    status = 409


class HistoryEmpty(ServiceError):
    status = 409


class BadRequest(ServiceError):
    status = 400


@dataclass
class Session:
    id: str
    pose: np.ndarray
    translation: np.ndarray
    history: deque = field(default_factory=lambda: deque(maxlen=HISTORY_LIMIT))
    dirty: bool = False
    lock: threading.Lock = field(default_factory=threading.Lock)


class AnnotationService:
    """Owns the sessions; all pose math is delegated to the skeleton module."""

    def __init__(self, tree=None, intrinsics=camera.DEFAULT_INTRINSICS,
                 dataset=None, save_path=None, static_dir=None):
        self.tree = tree if tree is not None else skeleton.default_tree()
        self.intrinsics = intrinsics
        self.dataset = dataset
        self.save_path = save_path
        self.static_dir = static_dir
        self.sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    # -- session API -------------------------------------------------------

    def create_session(self, index=None):
        if index is None:
            pose = skeleton.neutral_pose()
        else:
            if self.dataset is None:
                raise SessionNotFound("no dataset loaded")
            if not 0 <= index < len(self.dataset):
                raise SessionNotFound(f"pose index {index} out of range")
            pose = np.array(self.dataset[index])
        skeleton.validate_pose(pose, self.tree)
        session = Session(uuid.uuid4().hex, pose, np.array(DEFAULT_TRANSLATION))
        camera.project(session.pose, session.translation, self.intrinsics)
        with self._lock:
            self.sessions[session.id] = session
        return self._payload(session)

    def _get(self, sid):
        with self._lock:
            session = self.sessions.get(sid)
        if session is None:
            raise SessionNotFound(f"unknown session {sid}")
        return session

    def state(self, sid):
        session = self._get(sid)
        with session.lock:
            return self._payload(session)

    def edit_bone(self, sid, bone_index, dtheta, dphi):
        if not (np.isfinite(dtheta) and np.isfinite(dphi)):
            raise BadRequest("deltas must be finite")
        session = self._get(sid)
        with session.lock:
            if not 0 <= bone_index < self.tree.n_bones:
                raise BadRequest(f"bone index {bone_index} out of range")
            sph = skeleton.spherical_of_pose(session.pose, self.tree)
            _, theta, phi = sph[bone_index]
            self._apply(session, lambda p: skeleton.set_bone_orientation(
                p, self.tree, bone_index, theta + dtheta, phi + dphi))
            return self._payload(session)

    def edit_global(self, sid, axis, dangle):
        if axis not in (0, 1, 2):
            raise BadRequest("axis must be 0, 1 or 2")
        if not np.isfinite(dangle):
            raise BadRequest("angle must be finite")
        angles = [0.0, 0.0, 0.0]
        angles[axis] = dangle
        session = self._get(sid)
        with session.lock:
            self._apply(session, lambda p: mutate_global(p, angles))
            return self._payload(session)

    def _apply(self, session, op):
        """Run an edit; reject it (pose unchanged) if the result cannot be
        framed or projected."""
        try:
            new_pose = op(session.pose)
            skeleton.validate_pose(new_pose, self.tree)
            camera.project(new_pose, session.translation, self.intrinsics)
        except (skeleton.SkeletonError, camera.CameraError) as exc:
            raise EditRejected(str(exc)) from exc
        session.history.append(session.pose.copy())
        session.pose = new_pose
        session.dirty = True

    def undo(self, sid):
        session = self._get(sid)
        with session.lock:
            if not session.history:
                raise HistoryEmpty("nothing to undo")
            session.pose = session.history.pop()
            session.dirty = True
            return self._payload(session)

    def save(self, sid, path=None):
        session = self._get(sid)
        target = path or self.save_path
        if not target:
            raise BadRequest("no save path configured")
        with session.lock:
            count = datastore.append_skeleton(target, session.pose, self.tree)
            session.dirty = False
        return {"path": target, "count": count}

    def tree_payload(self):
        tree = self.tree
        return {
            "joint_names": list(tree.joint_names),
            "parents": list(tree.parents),
            "root": tree.root,
            "bone_children": list(tree.bone_child),
            "limb_classes": list(tree.limb_class_of_bone),
            "reference": dict(tree.reference),
        }

    def _payload(self, session):
        kp = camera.project(session.pose, session.translation, self.intrinsics)
        sph = skeleton.spherical_of_pose(session.pose, self.tree)
        k = self.intrinsics
        return {
            "session_id": session.id,
            "joints": session.pose.tolist(),
            "bones_spherical": sph.tolist(),
            "keypoints2d": kp.tolist(),
            "translation": session.translation.tolist(),
            "intrinsics": {"fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy,
                           "width": k.image_width, "height": k.image_height},
            "tree": self.tree_payload(),
            "history_depth": len(session.history),
            "dirty": session.dirty,
        }


_ROUTES = [
    ("POST", re.compile(r"^/session$"), "create"),
    ("GET", re.compile(r"^/session/([0-9a-f]+)/state$"), "state"),
    ("POST", re.compile(r"^/session/([0-9a-f]+)/bone$"), "bone"),
    ("POST", re.compile(r"^/session/([0-9a-f]+)/global$"), "global"),
    ("POST", re.compile(r"^/session/([0-9a-f]+)/undo$"), "undo"),
    ("POST", re.compile(r"^/session/([0-9a-f]+)/save$"), "save"),
    ("GET", re.compile(r"^/skeleton/tree$"), "tree"),
]


class _Handler(BaseHTTPRequestHandler):
    service: AnnotationService = None
    protocol_version = "HTTP/1.1"

    def log_message(self, *args):
        pass

    def _send_json(self, payload, status=200):
        body = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self._cors()
        self.end_headers()
        self.wfile.write(body)

    def _cors(self):
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")

    def _body(self):
        length = int(self.headers.get("Content-Length") or 0)
        if length == 0:
            return {}
        try:
            return json.loads(self.rfile.read(length) or b"{}")
        except json.JSONDecodeError as exc:
            raise BadRequest(f"bad JSON body: {exc}") from exc

    def do_OPTIONS(self):
        self.send_response(204)
        self.send_header("Content-Length", "0")
        self._cors()
        self.end_headers()

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def _dispatch(self, method):
        svc = self.service
        try:
            if method == "GET" and self.path.startswith("/static/"):
                return self._static()
            for verb, pattern, name in _ROUTES:
                match = pattern.match(self.path)
                if not match or verb != method:
                    continue
                if name == "create":
                    body = self._body()
                    return self._send_json(svc.create_session(body.get("index")))
                sid = match.group(1) if match.groups() else None
                if name == "state":
                    return self._send_json(svc.state(sid))
                if name == "bone":
                    body = self._body()
                    return self._send_json(svc.edit_bone(
                        sid, int(body["bone_index"]),
                        float(body["dtheta"]), float(body["dphi"])))
                if name == "global":
                    body = self._body()
                    return self._send_json(svc.edit_global(
                        sid, int(body["axis"]), float(body["dangle"])))
                if name == "undo":
                    return self._send_json(svc.undo(sid))
                if name == "save":
                    body = self._body()
                    return self._send_json(svc.save(sid, body.get("path")))
                if name == "tree":
                    return self._send_json(svc.tree_payload())
            self._send_json({"error": f"no route for {method} {self.path}"}, 404)
        except ServiceError as exc:
            self._send_json({"error": str(exc)}, exc.status)
        except (KeyError, TypeError, ValueError) as exc:
            self._send_json({"error": f"bad request: {exc}"}, 400)

    def _static(self):
        root = self.service.static_dir
        if not root:
            return self._send_json({"error": "no static directory configured"}, 404)
        rel = self.path[len("/static/"):]
        full = os.path.realpath(os.path.join(root, rel))
        if not full.startswith(os.path.realpath(root) + os.sep):
            return self._send_json({"error": "forbidden"}, 403)
        if not os.path.isfile(full):
            return self._send_json({"error": "not found"}, 404)
        ctype = mimetypes.guess_type(full)[0] or "application/octet-stream"
        with open(full, "rb") as fh:
            body = fh.read()
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self._cors()
        self.end_headers()
        self.wfile.write(body)


def make_server(service, host="127.0.0.1", port=0):
    handler = type("BoundHandler", (_Handler,), {"service": service})
    return ThreadingHTTPServer((host, port), handler)


def serve(service, host="127.0.0.1", port=8000):
    server = make_server(service, host, port)
    try:
        server.serve_forever()
    finally:
        server.server_close()
