import base64
import logging
import threading
from datetime import datetime
from pathlib import Path
from typing import Any, Dict

from flask import Flask, jsonify, request
from flask_socketio import SocketIO

from channel import channel_for, simulate, tcm
from cli import load_corpus
from codec import parse_qdct, qdct_bytes
from config import CHANNEL_CONFIG, EVALUATION_CONFIG, LOGGING_CONFIG, WEBSERVER_CONFIG
from ecc import bch_code
from exceptions import ExtractionFailure, FormatError, RsvrcError
from pipeline import (METHODS, EmbedParams, StegoKey, embed, evaluate, extract,
                      load_evaluation_settings, write_report)

logging.basicConfig(level=LOGGING_CONFIG["level"], format=LOGGING_CONFIG["format"])
logger = logging.getLogger(__name__)

app = Flask(__name__)
app.config['SECRET_KEY'] = 'rsvrc-stego-service'
socketio = SocketIO(app, cors_allowed_origins='*', async_mode='threading')

evaluation_state: Dict[str, Any] = {"running": False, "done": 0, "total": 0, "results": None, "error": None}
evaluation_lock = threading.Lock()


def _error(e: Exception):
    status = 422 if isinstance(e, ExtractionFailure) else 400
    body = {"success": False, "message": str(e)}
    if isinstance(e, ExtractionFailure):
        body["stats"] = e.stats
    return jsonify(body), status


def check_key(data: Dict[str, Any]) -> tuple[bool, str]:
    key = data.get('key')
    if not key:
        return False, "Missing key"
    try:
        bytes.fromhex(key)
    except ValueError:
        return False, "key must be a hex string"
    return True, ""


def check_quality(data: Dict[str, Any]) -> tuple[bool, str]:
    quality = data.get('quality', CHANNEL_CONFIG['quality'])
    if not isinstance(quality, int) or not 1 <= quality <= 100:
        return False, f"quality must be an integer in [1, 100], got {quality!r}"
    return True, ""


def check_bch(data: Dict[str, Any]) -> tuple[bool, str]:
    bch = data.get('bch')
    if bch is None:
        return True, ""
    try:
        bch_code(*bch)
    except (TypeError, RsvrcError) as e:
        return False, f"invalid BCH parameters {bch!r}: {e}"
    return True, ""


def check_report_name(data: Dict[str, Any]) -> tuple[bool, str]:
    name = data.get('out', 'evaluation_report.json')
    if not isinstance(name, str) or not name:
        return False, "out must be a file name"
    if Path(name).is_absolute() or Path(name).name != name or name in ('.', '..'):
        return False, f"out must be a plain file name inside the report directory, got {name!r}"
    return True, ""


def report_path(name: str) -> Path:
    report_dir = Path(EVALUATION_CONFIG['report_dir'])
    report_dir.mkdir(parents=True, exist_ok=True)
    return report_dir / name


def _validate(data: Dict[str, Any], *checks) -> tuple[bool, str]:
    for check in checks:
        ok, message = check(data)
        if not ok:
            return ok, message
    return True, ""


def _image_from(data: Dict[str, Any], field: str = 'image'):
    encoded = data.get(field)
    if not encoded:
        raise RsvrcError(f"Missing {field}")
    try:
        raw = base64.b64decode(encoded, validate=True)
    except ValueError as e:
        raise FormatError(f"{field} is not valid base64: {e}") from e
    return parse_qdct(raw)


def _params_from(data: Dict[str, Any]) -> EmbedParams:
    n, k = data.get('bch') or (None, None)
    return EmbedParams.from_config(
        payload=data.get('payload'), quality=data.get('quality'), max_iters=data.get('max_iters'),
        h=data.get('height'), bch_n=n, bch_k=k, subimages=data.get('subimages'),
        codewords=data.get('codewords'),
    )


@app.route('/api/status')
def get_status():
    with evaluation_lock:
        running = evaluation_state['running']
    return jsonify({
        "success": True,
        "methods": list(METHODS),
        "defaults": EmbedParams.from_config().to_dict(),
        "evaluation_running": running,
    })


@app.route('/api/tcm', methods=['POST'])
def run_tcm():
    data = request.get_json() or {}
    ok, message = _validate(data, check_quality)
    if not ok:
        return jsonify({"success": False, "message": message}), 400
    try:
        ci = _image_from(data)
        quality = data.get('quality', CHANNEL_CONFIG['quality'])
        result = tcm(ci, channel_for(ci, quality), data.get('max_iters', CHANNEL_CONFIG['max_iters']))
        return jsonify({"success": True, "data": result.to_dict(),
                        "image": base64.b64encode(qdct_bytes(result.image)).decode('ascii')})
    except RsvrcError as e:
        logger.error(f"TCM request failed: {e}")
        return _error(e)


@app.route('/api/embed', methods=['POST'])
def run_embed():
    data = request.get_json() or {}
    ok, message = _validate(data, check_key, check_quality, check_bch)
    if not ok:
        return jsonify({"success": False, "message": message}), 400
    method = data.get('method', 'rsvrc')
    try:
        cover = _image_from(data, 'cover')
        msg = base64.b64decode(data.get('message', ''))
        stego, report = embed(cover, msg, StegoKey.from_hex(data['key']), _params_from(data), method)
        return jsonify({"success": True, "data": report,
                        "stego": base64.b64encode(qdct_bytes(stego)).decode('ascii')})
    except (RsvrcError, ValueError) as e:
        logger.error(f"Embed request failed: {e}")
        return _error(e)


@app.route('/api/extract', methods=['POST'])
def run_extract():
    data = request.get_json() or {}
    ok, message = _validate(data, check_key, check_bch)
    if not ok:
        return jsonify({"success": False, "message": message}), 400
    try:
        received = _image_from(data, 'stego')
        result = extract(received, StegoKey.from_hex(data['key']), _params_from(data))
        return jsonify({"success": True, "data": result.to_dict(),
                        "message": base64.b64encode(result.message).decode('ascii')})
    except RsvrcError as e:
        logger.error(f"Extract request failed: {e}")
        return _error(e)


@app.route('/api/simulate', methods=['POST'])
def run_simulate():
    data = request.get_json() or {}
    ok, message = _validate(data, check_quality)
    if not ok:
        return jsonify({"success": False, "message": message}), 400
    try:
        ci = _image_from(data)
        out = simulate(ci, channel_for(ci, data.get('quality', CHANNEL_CONFIG['quality'])),
                       int(data.get('passes', 1)))
        return jsonify({
            "success": True,
            "passes": [r.to_dict() for r in out['passes']],
            "cumulative": out['cumulative'].to_dict(),
            "image": base64.b64encode(qdct_bytes(out['image'])).decode('ascii'),
        })
    except RsvrcError as e:
        logger.error(f"Simulate request failed: {e}")
        return _error(e)


def on_evaluate_progress(update: Dict[str, Any]):
    with evaluation_lock:
        evaluation_state['done'] = update['done']
        evaluation_state['total'] = update['total']
    socketio.emit('evaluate_progress', update)


def start_evaluation(corpus, params: EmbedParams, key: StegoKey, settings: Dict[str, Any], out: str):
    """Run an evaluation in a background thread and broadcast its progress."""
    def evaluate_loop():
        try:
            results = evaluate(corpus, params, key, settings['methods'], settings['qualities'],
                               settings['payloads'], [tuple(c) for c in settings['bch']],
                               seed=settings.get('seed', 0), progress=on_evaluate_progress)
            write_report(out, results, settings, EVALUATION_CONFIG['report_version'])
            summary = [{k: v for k, v in r.to_dict().items() if k != 'records'} for r in results]
            with evaluation_lock:
                evaluation_state.update(running=False, results=summary, finished_at=datetime.now().isoformat())
            socketio.emit('evaluate_done', {"success": True, "results": summary, "report": out})
        except Exception as e:
            logger.error(f"Evaluation failed: {e}")
            with evaluation_lock:
                evaluation_state.update(running=False, error=str(e))
            socketio.emit('evaluate_done', {"success": False, "message": str(e)})

    thread = threading.Thread(target=evaluate_loop, daemon=True)
    thread.start()
    return thread


@app.route('/api/evaluate', methods=['POST'])
def run_evaluate():
    data = request.get_json() or {}
    ok, message = _validate(data, check_bch, check_report_name)
    if not ok:
        return jsonify({"success": False, "message": message}), 400
    corpus_dir = data.get('corpus')
    if not corpus_dir or not Path(corpus_dir).is_dir():
        return jsonify({"success": False, "message": f"corpus directory not found: {corpus_dir!r}"}), 400

    settings = load_evaluation_settings(EVALUATION_CONFIG['settings_file'])
    for field in ('methods', 'qualities', 'payloads', 'crop', 'seed'):
        if field in data:
            settings[field] = data[field]
    if data.get('bch'):
        settings['bch'] = [data['bch']]

    with evaluation_lock:
        if evaluation_state['running']:
            return jsonify({"success": False, "message": "An evaluation is already running"}), 409
        evaluation_state.update(running=True, done=0, total=0, results=None, error=None,
                                started_at=datetime.now().isoformat())
    try:
        corpus = load_corpus(Path(corpus_dir), settings.get('crop'))
        if not corpus:
            raise RsvrcError(f"no usable covers in {corpus_dir}")
        params = EmbedParams.from_config(quality=settings['qualities'][0], payload=settings['payloads'][0])
        key = StegoKey.from_hex(data.get('key', '00'))
        out = str(report_path(data.get('out', 'evaluation_report.json')))
    except (RsvrcError, OSError) as e:
        with evaluation_lock:
            evaluation_state['running'] = False
        return _error(e)

    start_evaluation(corpus, params, key, settings, out)
    logger.info(f"Started evaluation of {len(corpus)} covers from {corpus_dir}")
    return jsonify({"success": True, "message": "Evaluation started", "images": len(corpus)})


@app.route('/api/evaluate/status')
def get_evaluation_status():
    with evaluation_lock:
        state = dict(evaluation_state)
    return jsonify({"success": True, **state})


@socketio.on('connect')
def handle_connect():
    logger.info("Client connected")
    with evaluation_lock:
        state = dict(evaluation_state)
    socketio.emit('evaluate_status', state)


@socketio.on('disconnect')
def handle_disconnect():
    logger.info("Client disconnected")


if __name__ == '__main__':
    logger.info(f"Starting web server on {WEBSERVER_CONFIG['host']}:{WEBSERVER_CONFIG['port']}")
    socketio.run(app, host=WEBSERVER_CONFIG['host'], port=WEBSERVER_CONFIG['port'],
                 debug=WEBSERVER_CONFIG['debug'], allow_unsafe_werkzeug=True)
